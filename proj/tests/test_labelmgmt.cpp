#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "balancemix/labelmgmt.hpp"
#include "support/oracles.hpp"

using namespace balancemix;

namespace {

std::vector<double> bimodal_sample(std::size_t n, double w0, double m0, double s0, double m1,
                                   double s1, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution pick(1.0 - w0);  // true -> second mode
    std::normal_distribution<double> mode0(m0, s0);
    std::normal_distribution<double> mode1(m1, s1);
    std::vector<double> out(n);
    for (auto& x : out) x = pick(rng) ? mode1(rng) : mode0(rng);
    return out;
}

}  // namespace

TEST_CASE("fit_gmm: recovers a well-separated synthetic mixture") {
    const auto losses = bimodal_sample(2000, 0.7, 0.1, 0.05, 1.5, 0.1, 11);
    const Gmm1D gmm = fit_gmm(losses);
    REQUIRE(gmm.status == Gmm1D::FitStatus::Converged);
    CHECK(std::abs(gmm.means[0] - 0.1) < 0.05);
    CHECK(std::abs(gmm.means[1] - 1.5) < 0.05);
    CHECK(std::abs(gmm.weights[0] - 0.7) < 0.05);
    CHECK(std::abs(gmm.weights[1] - 0.3) < 0.05);
    CHECK(gmm.means[0] <= gmm.means[1]);
}

TEST_CASE("fit_gmm: identical losses fall back to degenerate") {
    const std::vector<double> losses(50, 0.42);
    const Gmm1D gmm = fit_gmm(losses);
    CHECK(gmm.status == Gmm1D::FitStatus::DegenerateFallback);
}

TEST_CASE("fit_gmm: fewer than min_points falls back to degenerate") {
    const std::vector<double> losses{0.1, 0.2, 0.3};
    CHECK(fit_gmm(losses).status == Gmm1D::FitStatus::DegenerateFallback);
}

TEST_CASE("fit_gmm: two repeated atoms put means on the atoms, variances on the floor") {
    std::vector<double> losses;
    for (int i = 0; i < 30; ++i) losses.push_back(0.1);
    for (int i = 0; i < 30; ++i) losses.push_back(2.0);
    const Gmm1D gmm = fit_gmm(losses);
    REQUIRE(gmm.status == Gmm1D::FitStatus::Converged);
    CHECK(gmm.means[0] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(gmm.means[1] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(gmm.variances[0] == doctest::Approx(1e-8));
    CHECK(gmm.variances[1] == doctest::Approx(1e-8));
    CHECK(gmm.weights[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("fit_gmm: log-likelihood trace is non-decreasing") {
    for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto losses = bimodal_sample(1000, 0.6, 0.2, 0.08, 1.2, 0.15, seed);
        const Gmm1D gmm = fit_gmm(losses);
        REQUIRE(gmm.status == Gmm1D::FitStatus::Converged);
        REQUIRE(gmm.loglik_trace.size() >= 2);
        for (std::size_t i = 1; i < gmm.loglik_trace.size(); ++i) {
            CHECK(gmm.loglik_trace[i] >= gmm.loglik_trace[i - 1] - 1e-9);
        }
    }
}

TEST_CASE("clean_posterior: symmetric mixture at the midpoint gives 0.5") {
    Gmm1D gmm;
    gmm.status = Gmm1D::FitStatus::Converged;
    gmm.means = {0.2, 1.0};
    gmm.variances = {0.04, 0.04};
    gmm.weights = {0.5, 0.5};
    CHECK(clean_posterior(gmm, 0.6) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("clean_posterior: density-ratio oracle at the clean mean") {
    Gmm1D gmm;
    gmm.status = Gmm1D::FitStatus::Converged;
    gmm.means = {0.1, 1.5};
    gmm.variances = {0.0025, 0.01};
    gmm.weights = {0.7, 0.3};
    // Direct density-ratio evaluation.
    auto phi = [](double x, double m, double v) {
        return std::exp(-(x - m) * (x - m) / (2.0 * v)) / std::sqrt(2.0 * M_PI * v);
    };
    const double num = 0.7 * phi(0.1, 0.1, 0.0025);
    const double den = num + 0.3 * phi(0.1, 1.5, 0.01);
    CHECK(clean_posterior(gmm, 0.1) == doctest::Approx(num / den).epsilon(1e-9));
    CHECK(clean_posterior(gmm, 0.1) > 0.99);
}

TEST_CASE("clean_posterior: diverging loss favors the noisy mode") {
    Gmm1D gmm;
    gmm.status = Gmm1D::FitStatus::Converged;
    gmm.means = {0.3, 1.1};
    gmm.variances = {0.09, 0.09};
    gmm.weights = {0.5, 0.5};
    CHECK(clean_posterior(gmm, 10.0) < 1e-6);
    CHECK(clean_posterior(gmm, 100.0) < 1e-12);
}

TEST_CASE("clean_posterior: degenerate fit treats everything as clean") {
    Gmm1D gmm;  // default status is DegenerateFallback
    CHECK(clean_posterior(gmm, 0.0) == 1.0);
    CHECK(clean_posterior(gmm, 100.0) == 1.0);
}

TEST_CASE("collect_loss_partitions: partition sizes follow the labels") {
    Matrix conf(3, 1);
    conf(0, 0) = 0.9;
    conf(1, 0) = 0.2;
    conf(2, 0) = 0.6;
    ByteMatrix labels(3, 1);
    labels(0, 0) = 1;
    labels(2, 0) = 1;
    const auto partitions = collect_loss_partitions(conf, labels);
    REQUIRE(partitions.size() == 1);
    CHECK(partitions[0].positive.size() == 2);
    CHECK(partitions[0].negative.size() == 1);

    const auto all_pos = collect_loss_partitions(conf, ByteMatrix(3, 1, 1));
    CHECK(all_pos[0].positive.size() == 3);
    CHECK(all_pos[0].negative.empty());
}

TEST_CASE("collect_loss_partitions: matches a scalar oracle on a random 20x3 case") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    std::bernoulli_distribution coin(0.5);
    Matrix conf(20, 3);
    ByteMatrix labels(20, 3);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        conf.data()[i] = unit(rng);
        labels.data()[i] = coin(rng);
    }
    const auto partitions = collect_loss_partitions(conf, labels);

    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < 20; ++i) {
            const double f = conf(i, c);
            if (labels(i, c)) {
                pos.push_back(-std::log(f));
            } else {
                neg.push_back(-std::log(1.0 - f));
            }
        }
        REQUIRE(partitions[c].positive.size() == pos.size());
        REQUIRE(partitions[c].negative.size() == neg.size());
        for (std::size_t i = 0; i < pos.size(); ++i) {
            CHECK(partitions[c].positive[i] == doctest::Approx(pos[i]).epsilon(1e-12));
        }
        for (std::size_t i = 0; i < neg.size(); ++i) {
            CHECK(partitions[c].negative[i] == doctest::Approx(neg[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("two_view_confidence: zero augmentation equals the plain confidence") {
    std::mt19937_64 rng(7);
    const ModelState model = init_model(6, 4, 3, rng());
    Matrix features(1, 6);
    for (std::size_t j = 0; j < 6; ++j) features(0, j) = 0.3 * static_cast<double>(j) - 1.0;

    FeatureAugmenter aug;
    aug.noise_sigma = 0.0;
    aug.dropout_rate = 0.0;
    aug.feature_std.assign(6, 1.0);

    std::mt19937_64 view_rng(1);
    const auto mean = two_view_confidence_row(model, features.row(0), aug, view_rng);
    const Matrix plain = forward(model, features);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(mean[c] == doctest::Approx(plain(0, c)).epsilon(1e-12));
    }
}

TEST_CASE("two_view_confidence: matches two explicit augmented forward passes") {
    std::mt19937_64 rng(9);
    const ModelState model = init_model(5, 4, 2, rng());
    Matrix features(1, 5);
    for (std::size_t j = 0; j < 5; ++j) features(0, j) = 0.5 - 0.2 * static_cast<double>(j);

    FeatureAugmenter aug = FeatureAugmenter::for_features(features, 0.2, 0.1);
    aug.feature_std.assign(5, 1.0);  // nonzero spread for a single row

    std::mt19937_64 a(42), b(42);
    const auto mean = two_view_confidence_row(model, features.row(0), aug, a);

    Matrix views(2, 5);
    aug.apply(features.row(0), views.row(0), b);
    aug.apply(features.row(0), views.row(1), b);
    const Matrix conf = forward(model, views);
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(mean[c] == doctest::Approx(0.5 * (conf(0, c) + conf(1, c))).epsilon(1e-12));
    }
}

TEST_CASE("two_view_confidences: threaded pass equals the sequential pass") {
    std::mt19937_64 rng(13);
    const ModelState model = init_model(8, 6, 4, rng());
    Matrix features(200, 8);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < features.size(); ++i) features.data()[i] = normal(rng);
    const FeatureAugmenter aug = FeatureAugmenter::for_features(features, 0.1, 0.1);

    const Matrix seq = two_view_confidences(model, features, aug, 99, 1);
    const Matrix par = two_view_confidences(model, features, aug, 99, 4);
    CHECK(seq == par);
}

TEST_CASE("triage_label: the three branches") {
    // Clean posterior wins regardless of the ensemble confidence.
    const auto clean = triage_label(0.9, 0.999, 0.975, 0);
    CHECK(clean.tag == Reliability::Clean);
    CHECK(clean.label == 0);

    // Low posterior + confident presence flips a negative to positive.
    const auto up = triage_label(0.2, 0.98, 0.975, 0);
    CHECK(up.tag == Reliability::Relabeled);
    CHECK(up.label == 1);

    // Low posterior + confident absence flips a positive to negative.
    const auto down = triage_label(0.2, 0.01, 0.975, 1);
    CHECK(down.tag == Reliability::Relabeled);
    CHECK(down.label == 0);

    // Neither branch: ambiguous, label kept.
    const auto ambiguous = triage_label(0.2, 0.5, 0.975, 1);
    CHECK(ambiguous.tag == Reliability::Ambiguous);
    CHECK(ambiguous.label == 1);

    // Posterior exactly 0.5 is not clean.
    const auto boundary = triage_label(0.5, 0.5, 0.975, 1);
    CHECK(boundary.tag == Reliability::Ambiguous);
}

TEST_CASE("manage_labels: epsilon at or below 0.5 is a configuration error") {
    std::mt19937_64 rng(1);
    const ModelState model = init_model(4, 3, 2, rng());
    Matrix features(30, 4);
    LabelLedger ledger = LabelLedger::from_observed(ByteMatrix(30, 2));
    ManagementOptions opts;
    opts.epsilon = 0.5;
    opts.augmenter.feature_std.assign(4, 1.0);
    CHECK_THROWS_AS(manage_labels(model, features, ledger, opts), ConfigError);
}

namespace {

// A dataset the model separates perfectly: class-0 instances at +mu,
// class-1 at -mu, labels one-hot, with a fraction of class-1 instances
// mislabeled as class 0.
struct SeparableFixture {
    Matrix features;
    ByteMatrix observed;
    ByteMatrix truth;
    ModelState model;
};

SeparableFixture make_separable(std::size_t n, double flip_fraction, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 0.05);
    SeparableFixture fx;
    fx.features = Matrix(n, 2);
    fx.observed = ByteMatrix(n, 2);
    fx.truth = ByteMatrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const bool second = i % 2 == 1;
        const double mu = second ? -1.0 : 1.0;
        fx.features(i, 0) = mu + jitter(rng);
        fx.features(i, 1) = -mu + jitter(rng);
        fx.truth(i, second ? 1 : 0) = 1;
        fx.observed(i, second ? 1 : 0) = 1;
    }
    // Mislabel a fraction of class-1 instances as class 0.
    std::size_t flipped = 0;
    const auto target = static_cast<std::size_t>(flip_fraction * static_cast<double>(n) / 2.0);
    for (std::size_t i = 1; i < n && flipped < target; i += 2) {
        fx.observed(i, 0) = 1;
        fx.observed(i, 1) = 0;
        ++flipped;
    }
    // A hand-built model with cross-inhibited readout: logit_k ~ 8 * (x_k - x_other),
    // confident in both presence and absence.
    fx.model = ModelState::zeros(2, 2, 2);
    fx.model.w1(0, 0) = 1.0;
    fx.model.w1(1, 1) = 1.0;
    fx.model.w2(0, 0) = 8.0;
    fx.model.w2(0, 1) = -8.0;
    fx.model.w2(1, 0) = -8.0;
    fx.model.w2(1, 1) = 8.0;
    return fx;
}

}  // namespace

TEST_CASE("manage_labels: separable mislabeled data is triaged correctly") {
    const SeparableFixture fx = make_separable(400, 0.2, 3);
    LabelLedger ledger = LabelLedger::from_observed(fx.observed);

    ManagementOptions opts;
    opts.epsilon = 0.975;
    opts.seed = 17;
    opts.augmenter = FeatureAugmenter::for_features(fx.features, 0.05, 0.05);

    const ManagementResult result = manage_labels(fx.model, fx.features, ledger, opts);

    // Partition invariant.
    const auto counts = result.ledger.counts();
    CHECK(counts.total() == 800);

    // The model is confident and correct, so re-labeling should restore the
    // corrupted rows toward the truth.
    std::size_t correct = 0;
    for (std::size_t i = 0; i < 400; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            if (result.ledger.label(i, c) == fx.truth(i, c)) ++correct;
        }
    }
    CHECK(static_cast<double>(correct) / 800.0 > 0.95);
    CHECK(counts.relabeled > 0);
}

TEST_CASE("manage_labels: deterministic given identical seeds") {
    const SeparableFixture fx = make_separable(200, 0.15, 5);
    const LabelLedger ledger = LabelLedger::from_observed(fx.observed);
    ManagementOptions opts;
    opts.epsilon = 0.975;
    opts.seed = 23;
    opts.augmenter = FeatureAugmenter::for_features(fx.features, 0.1, 0.1);

    const ManagementResult a = manage_labels(fx.model, fx.features, ledger, opts);
    const ManagementResult b = manage_labels(fx.model, fx.features, ledger, opts);
    CHECK(a.ledger.working == b.ledger.working);
    CHECK(a.ledger.reliability == b.ledger.reliability);
    CHECK(a.ledger.clean_posterior == b.ledger.clean_posterior);
    CHECK(a.ensemble_confidences == b.ensemble_confidences);
}

TEST_CASE("manage_labels: re-label decisions replay from stored ensemble confidences") {
    const SeparableFixture fx = make_separable(300, 0.25, 9);
    const LabelLedger base = LabelLedger::from_observed(fx.observed);
    ManagementOptions opts;
    opts.epsilon = 0.9;
    opts.seed = 31;
    opts.augmenter = FeatureAugmenter::for_features(fx.features, 0.05, 0.05);

    const ManagementResult result = manage_labels(fx.model, fx.features, base, opts);
    for (std::size_t i = 0; i < 300; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            if (result.ledger.tag(i, c) != Reliability::Relabeled) continue;
            const double ensemble = result.ensemble_confidences(i, c);
            if (result.ledger.label(i, c) == 1) {
                CHECK(ensemble > opts.epsilon);
            } else {
                CHECK(ensemble < 1.0 - opts.epsilon);
            }
        }
    }
}

TEST_CASE("posterior calibration: clean-component samples get p > 0.5 when modes are far") {
    // Modes 6+ sigma apart; draw labeled samples and check the posterior
    // routes at least 95 percent of clean ones correctly.
    std::mt19937_64 rng(41);
    std::normal_distribution<double> clean_mode(0.2, 0.05);
    std::normal_distribution<double> noisy_mode(1.4, 0.12);
    std::bernoulli_distribution from_noise(0.3);

    std::vector<double> losses;
    std::vector<bool> is_clean;
    for (int i = 0; i < 3000; ++i) {
        if (from_noise(rng)) {
            losses.push_back(noisy_mode(rng));
            is_clean.push_back(false);
        } else {
            losses.push_back(clean_mode(rng));
            is_clean.push_back(true);
        }
    }
    const Gmm1D gmm = fit_gmm(losses);
    REQUIRE(gmm.status == Gmm1D::FitStatus::Converged);
    std::size_t clean_total = 0, clean_right = 0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        if (!is_clean[i]) continue;
        ++clean_total;
        if (clean_posterior(gmm, losses[i]) > 0.5) ++clean_right;
    }
    CHECK(static_cast<double>(clean_right) / static_cast<double>(clean_total) >= 0.95);
}

TEST_CASE("ledger: from_observed starts all-clean and counts partition the labels") {
    ByteMatrix observed(4, 3);
    observed(0, 1) = 1;
    observed(2, 2) = 1;
    const LabelLedger ledger = LabelLedger::from_observed(observed);
    CHECK(ledger.counts().clean == 12);
    CHECK(ledger.counts().total() == 12);
    CHECK(ledger.label(0, 1) == 1);
    CHECK(ledger.label(0, 0) == 0);
    CHECK(ledger.working_matrix() == observed);
}
