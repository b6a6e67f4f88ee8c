#include "balancemix/labelmgmt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace balancemix {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

double log_normal_pdf(double x, double mean, double variance) {
    const double diff = x - mean;
    return -0.5 * diff * diff / variance - 0.5 * std::log(variance) - kHalfLog2Pi;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

namespace {

Gmm1D run_em_from(std::span<const double> losses, const Gmm1D& init,
                  const GmmFitOptions& options) {
    const std::size_t n = losses.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    Gmm1D gmm = init;
    std::vector<double> resp(n);
    double prev_loglik = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        // E-step in log space.
        double loglik = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double l0 = std::log(gmm.weights[0]) +
                              log_normal_pdf(losses[i], gmm.means[0], gmm.variances[0]);
            const double l1 = std::log(gmm.weights[1]) +
                              log_normal_pdf(losses[i], gmm.means[1], gmm.variances[1]);
            const double m = std::max(l0, l1);
            const double z = std::exp(l0 - m) + std::exp(l1 - m);
            loglik += m + std::log(z);
            double r = std::exp(l0 - m) / z;
            r = std::clamp(r, options.responsibility_floor, 1.0 - options.responsibility_floor);
            resp[i] = r;
        }
        gmm.loglik_trace.push_back(loglik);
        gmm.iterations = iter + 1;

        // M-step.
        double n0 = 0.0;
        for (const double r : resp) n0 += r;
        const double n1 = static_cast<double>(n) - n0;
        if (n0 > options.responsibility_floor && n1 > options.responsibility_floor) {
            double mu0 = 0.0, mu1 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                mu0 += resp[i] * losses[i];
                mu1 += (1.0 - resp[i]) * losses[i];
            }
            mu0 /= n0;
            mu1 /= n1;
            double v0 = 0.0, v1 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d0 = losses[i] - mu0;
                const double d1 = losses[i] - mu1;
                v0 += resp[i] * d0 * d0;
                v1 += (1.0 - resp[i]) * d1 * d1;
            }
            gmm.means = {mu0, mu1};
            gmm.variances = {std::max(v0 / n0, options.variance_floor),
                             std::max(v1 / n1, options.variance_floor)};
            gmm.weights = {std::clamp(n0 * inv_n, 1e-6, 1.0 - 1e-6),
                           std::clamp(n1 * inv_n, 1e-6, 1.0 - 1e-6)};
        }

        if (std::abs(loglik - prev_loglik) < options.tolerance) break;
        prev_loglik = loglik;
    }
    return gmm;
}

Gmm1D run_em(std::span<const double> losses, double init_m0, double init_m1, double init_var,
             const GmmFitOptions& options) {
    Gmm1D init;
    init.means = {init_m0, init_m1};
    init.variances = {init_var, init_var};
    init.weights = {0.5, 0.5};
    return run_em_from(losses, init, options);
}

}  // namespace

Gmm1D fit_gmm(std::span<const double> losses, const GmmFitOptions& options) {
    Gmm1D gmm;
    const std::size_t n = losses.size();
    if (n < options.min_points) return gmm;  // DegenerateFallback

    const double inv_n = 1.0 / static_cast<double>(n);
    const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) * inv_n;
    double var = 0.0;
    for (const double x : losses) var += (x - mean) * (x - mean);
    var *= inv_n;
    if (var < options.variance_floor) return gmm;  // zero spread

    std::vector<double> sorted(losses.begin(), losses.end());
    std::sort(sorted.begin(), sorted.end());

    // A single EM run from the middle quantiles finds junk-splitting local
    // optima when one mode holds almost all the mass (heavy noise on rare
    // classes). Run EM twice, from the percentile init and from a 1-D
    // 2-means partition (whose per-cluster spreads can isolate a small
    // cluster at either end), and keep the better likelihood.
    std::vector<Gmm1D> candidates;
    {
        double m0 = quantile_sorted(sorted, 0.2);
        double m1 = quantile_sorted(sorted, 0.8);
        if (m1 - m0 < 1e-12) {
            m0 = sorted.front();
            m1 = sorted.back();
        }
        candidates.push_back(run_em(losses, m0, m1, var, options));
    }
    {
        // Scan all split points of the sorted list and seed EM from the one
        // maximizing the hard-assignment Gaussian likelihood. Unlike a
        // moments or k-means init this prefers isolating a small, tight
        // cluster at either end, which is the global optimum when the
        // losses really are bimodal.
        std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            prefix[i + 1] = prefix[i] + sorted[i];
            prefix_sq[i + 1] = prefix_sq[i] + sorted[i] * sorted[i];
        }
        auto slice_stats = [&](std::size_t begin, std::size_t end, double& m, double& v) {
            const double count = static_cast<double>(end - begin);
            m = (prefix[end] - prefix[begin]) / count;
            v = (prefix_sq[end] - prefix_sq[begin]) / count - m * m;
            v = std::max(v, options.variance_floor);
        };
        double best_score = -std::numeric_limits<double>::infinity();
        std::size_t best_split = 0;
        for (std::size_t s = 1; s < n; ++s) {
            const double w0 = static_cast<double>(s) * inv_n;
            double m0, v0, m1, v1;
            slice_stats(0, s, m0, v0);
            slice_stats(s, n, m1, v1);
            const double score = static_cast<double>(s) * (std::log(w0) - 0.5 * std::log(v0)) +
                                 static_cast<double>(n - s) *
                                     (std::log(1.0 - w0) - 0.5 * std::log(v1));
            if (score > best_score) {
                best_score = score;
                best_split = s;
            }
        }
        if (best_split > 0 && best_split < n) {
            Gmm1D seeded;
            double m0, v0, m1, v1;
            slice_stats(0, best_split, m0, v0);
            slice_stats(best_split, n, m1, v1);
            seeded.means = {m0, m1};
            seeded.variances = {v0, v1};
            const double w0 = static_cast<double>(best_split) * inv_n;
            seeded.weights = {std::clamp(w0, 1e-6, 1.0 - 1e-6),
                              std::clamp(1.0 - w0, 1e-6, 1.0 - 1e-6)};
            candidates.push_back(run_em_from(losses, seeded, options));
        }
    }
    gmm = candidates.front();
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (candidates[i].loglik_trace.back() > gmm.loglik_trace.back()) gmm = candidates[i];
    }

    // Component 0 is the small-loss (clean) mode.
    if (gmm.means[0] > gmm.means[1]) {
        std::swap(gmm.means[0], gmm.means[1]);
        std::swap(gmm.variances[0], gmm.variances[1]);
        std::swap(gmm.weights[0], gmm.weights[1]);
    }

    // Overlapping modes mean the losses are not actually bimodal here.
    const double spread = std::sqrt(gmm.variances[0]) + std::sqrt(gmm.variances[1]);
    if (gmm.means[1] - gmm.means[0] < options.min_separation * spread) {
        Gmm1D fallback;
        fallback.loglik_trace = std::move(gmm.loglik_trace);
        fallback.iterations = gmm.iterations;
        return fallback;  // DegenerateFallback, everything treated as clean
    }

    gmm.status = Gmm1D::FitStatus::Converged;
    return gmm;
}

double clean_posterior(const Gmm1D& gmm, double loss) {
    if (gmm.status == Gmm1D::FitStatus::DegenerateFallback) return 1.0;
    const double l0 =
        std::log(gmm.weights[0]) + log_normal_pdf(loss, gmm.means[0], gmm.variances[0]);
    const double l1 =
        std::log(gmm.weights[1]) + log_normal_pdf(loss, gmm.means[1], gmm.variances[1]);
    const double diff = std::clamp(l1 - l0, -700.0, 700.0);
    return 1.0 / (1.0 + std::exp(diff));
}

std::vector<LossPartition> collect_loss_partitions(const Matrix& confidences,
                                                   const ByteMatrix& working_labels) {
    if (confidences.rows() != working_labels.rows() ||
        confidences.cols() != working_labels.cols()) {
        throw ContractError("collect_loss_partitions: shape mismatch");
    }
    const std::size_t n = confidences.rows();
    const std::size_t k = confidences.cols();
    std::vector<LossPartition> partitions(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            const double f = confidences(i, c);
            if (working_labels(i, c)) {
                partitions[c].positive.push_back(bce(f, 1.0));
            } else {
                partitions[c].negative.push_back(bce(f, 0.0));
            }
        }
    }
    return partitions;
}

void FeatureAugmenter::apply(std::span<const double> in, std::span<double> out,
                             std::mt19937_64& rng) const {
    if (in.size() != feature_std.size() || out.size() != in.size()) {
        throw ContractError("FeatureAugmenter: feature width mismatch");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t j = 0; j < in.size(); ++j) {
        out[j] = in[j] + noise_sigma * feature_std[j] * normal(rng);
    }
    for (std::size_t j = 0; j < in.size(); ++j) {
        if (unit(rng) < dropout_rate) out[j] = 0.0;
    }
}

FeatureAugmenter FeatureAugmenter::for_features(const Matrix& features, double noise_sigma,
                                                double dropout_rate) {
    FeatureAugmenter aug;
    aug.noise_sigma = noise_sigma;
    aug.dropout_rate = dropout_rate;
    aug.feature_std.assign(features.cols(), 0.0);
    if (features.rows() == 0) return aug;

    const double inv_n = 1.0 / static_cast<double>(features.rows());
    std::vector<double> mean(features.cols(), 0.0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        for (std::size_t j = 0; j < features.cols(); ++j) mean[j] += features(i, j);
    }
    for (auto& m : mean) m *= inv_n;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        for (std::size_t j = 0; j < features.cols(); ++j) {
            const double d = features(i, j) - mean[j];
            aug.feature_std[j] += d * d;
        }
    }
    for (auto& s : aug.feature_std) s = std::sqrt(s * inv_n);
    return aug;
}

std::vector<double> two_view_confidence_row(const ModelState& model,
                                            std::span<const double> features,
                                            const FeatureAugmenter& augmenter,
                                            std::mt19937_64& rng) {
    Matrix views(2, features.size());
    augmenter.apply(features, views.row(0), rng);
    augmenter.apply(features, views.row(1), rng);
    const Matrix conf = forward(model, views);
    std::vector<double> mean(conf.cols());
    for (std::size_t c = 0; c < conf.cols(); ++c) {
        mean[c] = 0.5 * (conf(0, c) + conf(1, c));
    }
    return mean;
}

Matrix two_view_confidences(const ModelState& model, const Matrix& features,
                            const FeatureAugmenter& augmenter, std::uint64_t seed,
                            int threads) {
    const std::size_t n = features.rows();
    Matrix result(n, model.num_classes());

    auto run_rows = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::mt19937_64 rng(mix_seed(seed, i));
            const auto mean = two_view_confidence_row(model, features.row(i), augmenter, rng);
            std::copy(mean.begin(), mean.end(), result.row(i).begin());
        }
    };

    if (threads <= 1 || n < 64) {
        run_rows(0, n);
        return result;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(run_rows, begin, end);
    }
    for (auto& t : pool) t.join();
    return result;
}

LabelLedger LabelLedger::from_observed(const ByteMatrix& observed) {
    LabelLedger ledger;
    ledger.num_instances = observed.rows();
    ledger.num_classes = observed.cols();
    ledger.working.assign(observed.data(), observed.data() + observed.size());
    ledger.reliability.assign(observed.size(), Reliability::Clean);
    ledger.clean_posterior.assign(observed.size(), 1.0);
    ledger.original = ledger.working;
    return ledger;
}

ByteMatrix LabelLedger::working_matrix() const {
    ByteMatrix m(num_instances, num_classes);
    std::copy(working.begin(), working.end(), m.data());
    return m;
}

LabelLedger::Counts LabelLedger::counts() const {
    Counts c;
    for (const Reliability r : reliability) {
        switch (r) {
            case Reliability::Clean: ++c.clean; break;
            case Reliability::Relabeled: ++c.relabeled; break;
            case Reliability::Ambiguous: ++c.ambiguous; break;
        }
    }
    return c;
}

TriageDecision triage_label(double clean_posterior, double ensemble_confidence, double epsilon,
                            std::uint8_t current_label) {
    if (clean_posterior > 0.5) return {Reliability::Clean, current_label};
    if (ensemble_confidence > epsilon) return {Reliability::Relabeled, 1};
    if (ensemble_confidence < 1.0 - epsilon) return {Reliability::Relabeled, 0};
    return {Reliability::Ambiguous, current_label};
}

ManagementResult manage_labels(const ModelState& model, const Matrix& features,
                               const LabelLedger& base, const ManagementOptions& options) {
    if (options.epsilon <= 0.5 || options.epsilon > 1.0) {
        throw ConfigError("manage_labels: epsilon must lie in (0.5, 1]");
    }
    if (features.rows() != base.num_instances || model.num_classes() != base.num_classes) {
        throw ContractError("manage_labels: model/dataset/ledger shape mismatch");
    }
    const std::size_t n = base.num_instances;
    const std::size_t k = base.num_classes;

    const Matrix conf = forward(model, features);
    const ByteMatrix working = base.working_matrix();
    const auto partitions = collect_loss_partitions(conf, working);

    GmmBank bank(k);
    auto fit_class = [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            bank[c].positive = fit_gmm(partitions[c].positive, options.gmm);
            bank[c].negative = fit_gmm(partitions[c].negative, options.gmm);
        }
    };
    if (options.threads <= 1 || k < 4) {
        fit_class(0, k);
    } else {
        const std::size_t workers = std::min<std::size_t>(options.threads, k);
        std::vector<std::thread> pool;
        const std::size_t chunk = (k + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(k, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(fit_class, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    ManagementResult result;
    result.bank = std::move(bank);
    result.ensemble_confidences =
        two_view_confidences(model, features, options.augmenter, options.seed, options.threads);

    result.ledger = base;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t idx = i * k + c;
            const std::uint8_t label = base.working[idx];
            const Gmm1D& gmm = label ? result.bank[c].positive : result.bank[c].negative;
            const double loss = bce(conf(i, c), static_cast<double>(label));
            const double p_clean = clean_posterior(gmm, loss);
            TriageDecision decision = triage_label(
                p_clean, result.ensemble_confidences(i, c), options.epsilon, label);
            // A surviving correction stays in the re-labeled set.
            if (decision.tag == Reliability::Clean && !base.original.empty() &&
                decision.label != base.original[idx]) {
                decision.tag = Reliability::Relabeled;
            }
            result.ledger.working[idx] = decision.label;
            result.ledger.reliability[idx] = decision.tag;
            result.ledger.clean_posterior[idx] = p_clean;
        }
    }
    return result;
}

}  // namespace balancemix
