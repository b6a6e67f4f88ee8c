#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "balancemix/serialize.hpp"
#include "balancemix/trainer.hpp"
#include "support/oracles.hpp"

using namespace balancemix;

namespace {

GeneratorConfig small_generator(std::uint64_t seed) {
    GeneratorConfig config;
    config.n = 400;
    config.feature_dim = 16;
    config.num_classes = 4;
    config.decay_ratio = 0.8;
    config.label_correlation = 0.2;
    config.separability = 6.0;
    config.seed = seed;
    return config;
}

struct SplitData {
    Dataset train;
    Dataset val;
};

// One generated pool split so both halves share the class prototypes.
SplitData make_split(std::uint64_t seed) {
    GeneratorConfig config = small_generator(seed);
    config.n = 540;
    auto [train, val] = split_dataset(generate(config), 0.25);
    return {std::move(train), std::move(val)};
}

TrainConfig small_train() {
    TrainConfig config;
    config.epochs = 8;
    config.warmup_epochs = 3;
    config.batch_size = 32;
    config.learning_rate = 0.2;
    config.hidden_dim = 24;
    config.seed = 5;
    return config;
}

// Confidence with a prescribed BCE against label 1: f = exp(-loss).
double confidence_for_positive_bce(double loss) { return std::exp(-loss); }

}  // namespace

TEST_CASE("composite_loss: all-clean tags reduce to the unweighted batch loss") {
    std::mt19937_64 rng(3);
    const ModelState model = init_model(6, 4, 3, rng());
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::bernoulli_distribution coin(0.5);

    std::vector<MixedInstance> instances(5);
    MiniBatch plain;
    plain.features = Matrix(5, 6);
    plain.labels = Matrix(5, 3);
    plain.weights = Matrix(5, 3, 1.0);
    for (std::size_t i = 0; i < 5; ++i) {
        MixedInstance& inst = instances[i];
        inst.features.resize(6);
        for (std::size_t j = 0; j < 6; ++j) {
            inst.features[j] = unit(rng);
            plain.features(i, j) = inst.features[j];
        }
        inst.labels.resize(3);
        inst.reliability.assign(3, Reliability::Clean);
        inst.ambiguous_weight.assign(3, 0.123);  // ignored for C tags
        for (std::size_t c = 0; c < 3; ++c) {
            inst.labels[c] = coin(rng);
            plain.labels(i, c) = inst.labels[c];
        }
        inst.lambda = 1.0;
    }
    const double composite = composite_loss(model, instances);
    const double reference = batch_loss_and_grads(model, plain).first;
    CHECK(composite == doctest::Approx(reference).epsilon(1e-12));
}

TEST_CASE("composite_loss: all-ambiguous with zero posterior is exactly zero") {
    std::mt19937_64 rng(5);
    const ModelState model = init_model(4, 3, 2, rng());
    std::vector<MixedInstance> instances(3);
    for (auto& inst : instances) {
        inst.features = {0.4, -0.2, 1.0, 0.3};
        inst.labels = {1.0, 0.0};
        inst.reliability.assign(2, Reliability::Ambiguous);
        inst.ambiguous_weight.assign(2, 0.0);
    }
    CHECK(composite_loss(model, instances) == 0.0);
}

TEST_CASE("composite_loss: frozen two-label example (C, U with 0.4) -> 0.7 + 0.4*1.0") {
    // Build a model whose confidences realize BCE 0.7 and 1.0 on positive labels.
    const double f0 = confidence_for_positive_bce(0.7);
    const double f1 = confidence_for_positive_bce(1.0);
    ModelState model = ModelState::zeros(1, 1, 2);
    model.b2[0] = std::log(f0 / (1.0 - f0));
    model.b2[1] = std::log(f1 / (1.0 - f1));

    MixedInstance inst;
    inst.features = {0.0};
    inst.labels = {1.0, 1.0};
    inst.reliability = {Reliability::Clean, Reliability::Ambiguous};
    inst.ambiguous_weight = {1.0, 0.4};
    const double loss = composite_loss(model, {inst});
    CHECK(loss == doctest::Approx(0.7 + 0.4 * 1.0).epsilon(1e-9));
}

TEST_CASE("build_mixed_batch: tags come from the random-sampler side") {
    const GeneratorConfig gen = small_generator(7);
    const Dataset ds = generate(gen);
    LabelLedger ledger = LabelLedger::from_observed(ds.observed_labels);
    // Scatter some tags to make inheritance observable.
    for (std::size_t i = 0; i < ledger.reliability.size(); i += 3) {
        ledger.reliability[i] = Reliability::Ambiguous;
        ledger.clean_posterior[i] = 0.25;
    }
    std::mt19937_64 rng(9);
    const std::vector<std::size_t> random_indices{0, 5, 9};
    const std::vector<std::size_t> minority_indices{1, 2, 3};
    const auto mixed = build_mixed_batch(ds, ledger, random_indices, minority_indices, 4.0, rng);
    REQUIRE(mixed.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t r = random_indices[i];
        CHECK(mixed[i].lambda >= 0.5);
        for (std::size_t c = 0; c < ds.num_classes(); ++c) {
            CHECK(mixed[i].reliability[c] == ledger.tag(r, c));
            CHECK(mixed[i].ambiguous_weight[c] == ledger.posterior(r, c));
            const double expected = mixed[i].lambda * ledger.label(r, c) +
                                    (1.0 - mixed[i].lambda) *
                                        ledger.label(minority_indices[i], c);
            CHECK(mixed[i].labels[c] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("train: baseline mode descends and never populates the ledger") {
    const auto [ds, val] = make_split(21);
    TrainConfig config = small_train();
    config.mode = TrainMode::BceBaseline;
    const TrainResult result = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    REQUIRE(result.reports.size() == config.epochs);
    CHECK(result.reports.back().mean_loss < result.reports.front().mean_loss);
    for (const auto& report : result.reports) {
        CHECK(report.counts.relabeled == 0);
        CHECK(report.counts.ambiguous == 0);
        CHECK(!report.sampler_entropy.has_value());
    }
}

TEST_CASE("train: warmup == epochs disables management entirely") {
    const auto [ds, val] = make_split(23);
    TrainConfig config = small_train();
    config.warmup_epochs = config.epochs;
    const TrainResult result = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    for (const auto& report : result.reports) {
        CHECK(report.counts.clean == ds.size() * ds.num_classes());
        CHECK(report.counts.relabeled == 0);
        CHECK(report.counts.ambiguous == 0);
        CHECK(report.sampler_entropy.has_value());  // sampler still updates every epoch
    }
    CHECK(result.ledger.working_matrix() == ds.observed_labels);
}

TEST_CASE("train: warm-up epochs stay unmanaged, management starts afterwards") {
    const auto [clean, val] = make_split(25);
    const Dataset ds = inject_mislabeling(clean, 0.2, 77);
    TrainConfig config = small_train();
    const TrainResult result = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    const std::size_t total = ds.size() * ds.num_classes();
    for (const auto& report : result.reports) {
        CHECK(report.counts.total() == total);
        if (report.epoch < static_cast<int>(config.warmup_epochs)) {
            CHECK(report.counts.clean == total);
        }
    }
    // After warm-up the triage runs; some labels leave the clean pool.
    bool any_managed = false;
    for (const auto& report : result.reports) {
        if (report.epoch >= static_cast<int>(config.warmup_epochs)) {
            any_managed = any_managed || report.counts.clean < total;
        }
    }
    CHECK(any_managed);
}

TEST_CASE("train: identical seeds give bit-identical reports, different seeds differ") {
    const auto [ds, val] = make_split(31);
    TrainConfig config = small_train();

    const TrainResult a = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    const TrainResult b = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    REQUIRE(a.reports.size() == b.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        CHECK(epoch_report_to_json(a.reports[i]).dump() ==
              epoch_report_to_json(b.reports[i]).dump());
    }
    CHECK(a.model.w1 == b.model.w1);
    CHECK(a.model.w2 == b.model.w2);

    config.seed = 6;
    const TrainResult c = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    CHECK(epoch_report_to_json(a.reports.back()).dump() !=
          epoch_report_to_json(c.reports.back()).dump());
}

TEST_CASE("train: analytics threads do not change the result") {
    const auto [clean, val] = make_split(33);
    const Dataset ds = inject_random_flip(clean, 0.1, 3);
    TrainConfig config = small_train();

    const TrainResult seq = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    config.threads = 4;
    const TrainResult par = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    for (std::size_t i = 0; i < seq.reports.size(); ++i) {
        CHECK(epoch_report_to_json(seq.reports[i]).dump() ==
              epoch_report_to_json(par.reports[i]).dump());
    }
    CHECK(seq.model.w1 == par.model.w1);
}

TEST_CASE("train: config invariants are enforced") {
    const Dataset ds = generate(small_generator(41));
    const GroupSpec groups = GroupSpec::fractions_of(ds.size());

    TrainConfig bad = small_train();
    bad.warmup_epochs = bad.epochs + 1;
    CHECK_THROWS_AS(train(bad, ds, ds, groups), ConfigError);

    bad = small_train();
    bad.alpha = 0.0;
    CHECK_THROWS_AS(train(bad, ds, ds, groups), ConfigError);

    bad = small_train();
    bad.epsilon = 0.5;
    CHECK_THROWS_AS(train(bad, ds, ds, groups), ConfigError);

    bad = small_train();
    bad.batch_size = ds.size() + 1;
    CHECK_THROWS_AS(train(bad, ds, ds, groups), ConfigError);
}

TEST_CASE("evaluate: converged model on separable data reaches mAP 1") {
    GeneratorConfig gen = small_generator(51);
    gen.n = 540;
    gen.decay_ratio = 1.0;
    gen.separability = 8.0;
    const auto [ds, val] = split_dataset(generate(gen), 0.25);

    TrainConfig config;
    config.mode = TrainMode::BceBaseline;
    config.epochs = 60;
    config.warmup_epochs = 0;
    config.batch_size = 40;
    config.learning_rate = 0.3;
    config.hidden_dim = 32;
    config.seed = 2;
    const TrainResult result = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    CHECK(*result.reports.back().validation.map.all == doctest::Approx(1.0));
}

TEST_CASE("evaluate: untrained model scores near prevalence on random labels") {
    // Zero model ties every score; AP then equals the prevalence up to
    // ranking noise from the index tie-break.
    const std::size_t n = 10000;
    std::mt19937_64 rng(61);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.25);

    Dataset val;
    val.features = Matrix(n, 8);
    val.true_labels = ByteMatrix(n, 2);
    for (std::size_t i = 0; i < val.features.size(); ++i) val.features.data()[i] = normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
        val.true_labels(i, 0) = coin(rng);
        val.true_labels(i, 1) = coin(rng);
    }
    val.observed_labels = val.true_labels;

    std::mt19937_64 mrng(62);
    const ModelState model = init_model(8, 4, 2, mrng());
    const MetricsSnapshot snap =
        evaluate(model, val, val.true_positive_counts(), GroupSpec::fractions_of(n));
    CHECK(std::abs(*snap.map.all - 0.25) < 0.02);

    // Deterministic: repeated evaluation gives identical numbers.
    const MetricsSnapshot again =
        evaluate(model, val, val.true_positive_counts(), GroupSpec::fractions_of(n));
    CHECK(*again.map.all == *snap.map.all);
}

TEST_CASE("train: sampler label source is irrelevant while the ledger is untouched") {
    const auto [ds, val] = make_split(81);
    TrainConfig config = small_train();
    config.warmup_epochs = config.epochs;  // management never runs
    config.sampler_label_source = SamplerLabelSource::Refined;
    const TrainResult refined = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    config.sampler_label_source = SamplerLabelSource::Original;
    const TrainResult original = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    for (std::size_t i = 0; i < refined.reports.size(); ++i) {
        CHECK(epoch_report_to_json(refined.reports[i]).dump() ==
              epoch_report_to_json(original.reports[i]).dump());
    }
}

TEST_CASE("train: relabel_from_original re-derives tags each epoch deterministically") {
    const auto [clean, val] = make_split(83);
    const Dataset ds = inject_mislabeling(clean, 0.2, 3);
    TrainConfig config = small_train();
    config.relabel_from_original = true;
    const TrainResult a = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    const TrainResult b = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    CHECK(epoch_report_to_json(a.reports.back()).dump() ==
          epoch_report_to_json(b.reports.back()).dump());
    CHECK(a.reports.back().counts.total() == ds.size() * ds.num_classes());
}

TEST_CASE("train: epoch count and pairing contract") {
    const auto [ds, val] = make_split(71);
    TrainConfig config = small_train();
    const TrainResult result = train(config, ds, val, GroupSpec::fractions_of(ds.size()));
    REQUIRE(result.reports.size() == config.epochs);
    for (std::size_t i = 0; i < result.reports.size(); ++i) {
        CHECK(result.reports[i].epoch == static_cast<int>(i + 1));
        CHECK(std::isfinite(result.reports[i].mean_loss));
    }
    // Sampler probs sum to one in every diagnostic row.
    for (const auto& diag : result.diagnostics) {
        double total = 0.0;
        for (const double p : diag.sampler_probs) total += p;
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}
