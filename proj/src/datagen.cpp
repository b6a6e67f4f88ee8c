#include "balancemix/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace balancemix {

const char* NoiseSpec::type_name(Type t) {
    switch (t) {
        case Type::None: return "none";
        case Type::Mislabel: return "mislabel";
        case Type::Flip: return "flip";
        case Type::SinglePositive: return "single_positive";
    }
    return "none";
}

NoiseSpec::Type NoiseSpec::parse_type(const std::string& name) {
    if (name == "none") return Type::None;
    if (name == "mislabel") return Type::Mislabel;
    if (name == "flip") return Type::Flip;
    if (name == "single_positive") return Type::SinglePositive;
    throw ConfigError("unknown noise type: " + name);
}

namespace {

std::vector<std::size_t> column_positive_counts(const ByteMatrix& labels) {
    std::vector<std::size_t> counts(labels.cols(), 0);
    for (std::size_t n = 0; n < labels.rows(); ++n) {
        const auto row = labels.row(n);
        for (std::size_t k = 0; k < labels.cols(); ++k) counts[k] += row[k];
    }
    return counts;
}

void require_clean_observed(const Dataset& ds, const char* op) {
    if (!(ds.observed_labels == ds.true_labels)) {
        throw ContractError(std::string(op) + ": noise must be injected into clean data "
                            "(observed != true)");
    }
}

}  // namespace

std::vector<std::size_t> Dataset::observed_positive_counts() const {
    return column_positive_counts(observed_labels);
}

std::vector<std::size_t> Dataset::observed_negative_counts() const {
    auto counts = column_positive_counts(observed_labels);
    for (auto& c : counts) c = size() - c;
    return counts;
}

std::vector<std::size_t> Dataset::true_positive_counts() const {
    return column_positive_counts(true_labels);
}

double Dataset::label_disagreement() const {
    std::size_t diff = 0;
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        diff += true_labels.data()[i] != observed_labels.data()[i];
    }
    return true_labels.size() == 0 ? 0.0
                                   : static_cast<double>(diff) / static_cast<double>(true_labels.size());
}

double GeneratorConfig::decay_for_imbalance(double cls_imbalance, std::size_t num_classes) {
    if (cls_imbalance < 1.0 || num_classes < 2) {
        throw ConfigError("decay_for_imbalance: need ratio >= 1 and K >= 2");
    }
    return std::pow(1.0 / cls_imbalance, 1.0 / static_cast<double>(num_classes - 1));
}

void GeneratorConfig::validate() const {
    if (n == 0) throw ConfigError("generator: n must be positive");
    if (feature_dim == 0) throw ConfigError("generator: feature_dim must be positive");
    if (num_classes < 2) throw ConfigError("generator: num_classes must be >= 2");
    if (!(decay_ratio > 0.0) || decay_ratio > 1.0) {
        throw ConfigError("generator: decay_ratio must be in (0, 1]");
    }
    if (label_correlation < 0.0 || label_correlation > 1.0) {
        throw ConfigError("generator: label_correlation must be in [0, 1]");
    }
    if (!(separability > 0.0)) throw ConfigError("generator: separability must be positive");

    // Expected primary-draw count of the tail class must reach one instance.
    double norm = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) norm += std::pow(decay_ratio, static_cast<double>(k));
    const double tail_share = std::pow(decay_ratio, static_cast<double>(num_classes - 1)) / norm;
    if (static_cast<double>(n) * tail_share < 1.0) {
        throw ConfigError("generator: profile infeasible, expected tail-class count < 1");
    }
}

Dataset generate(const GeneratorConfig& config) {
    config.validate();
    const std::size_t n = config.n;
    const std::size_t d = config.feature_dim;
    const std::size_t k = config.num_classes;

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Geometric class profile.
    std::vector<double> share(k);
    double norm = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        share[c] = std::pow(config.decay_ratio, static_cast<double>(c));
        norm += share[c];
    }
    for (auto& s : share) s /= norm;

    Matrix prototypes(k, d);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < d; ++j) prototypes(c, j) = unit_normal(rng);
    }

    Dataset ds;
    ds.features = Matrix(n, d);
    ds.true_labels = ByteMatrix(n, k);
    ds.seed = config.seed;

    std::discrete_distribution<std::size_t> primary(share.begin(), share.end());
    const double noise_sigma = 1.0 / config.separability;

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t head = primary(rng);
        ds.true_labels(i, head) = 1;
        for (std::size_t c = 0; c < k; ++c) {
            if (c == head) continue;
            if (unit(rng) < config.label_correlation * share[c]) ds.true_labels(i, c) = 1;
        }
        double* x = ds.features.row(i).data();
        for (std::size_t c = 0; c < k; ++c) {
            if (!ds.true_labels(i, c)) continue;
            const double* p = prototypes.row(c).data();
            for (std::size_t j = 0; j < d; ++j) x[j] += p[j];
        }
        for (std::size_t j = 0; j < d; ++j) x[j] += noise_sigma * unit_normal(rng);
    }

    ds.observed_labels = ds.true_labels;
    return ds;
}

Matrix mislabel_transition_table(const std::vector<std::size_t>& positive_counts, double tau) {
    const std::size_t k = positive_counts.size();
    if (k < 2) throw ContractError("mislabel_transition_table: need K >= 2");
    const double total =
        static_cast<double>(std::accumulate(positive_counts.begin(), positive_counts.end(),
                                            std::size_t{0}));
    Matrix rho(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        const double rest = total - static_cast<double>(positive_counts[i]);
        if (rest <= 0.0) {
            throw ContractError("mislabel_transition_table: class holds all positive labels");
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            rho(i, j) = tau * static_cast<double>(positive_counts[j]) / rest;
        }
    }
    return rho;
}

Dataset inject_mislabeling(const Dataset& ds, double tau, std::uint64_t seed) {
    require_clean_observed(ds, "inject_mislabeling");
    if (ds.num_classes() < 2) throw ContractError("inject_mislabeling: need K >= 2");
    if (tau < 0.0 || tau >= 1.0) throw ConfigError("inject_mislabeling: tau must be in [0, 1)");

    const auto counts = ds.true_positive_counts();
    const double total =
        static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));

    Dataset out = ds;
    out.noise = {NoiseSpec::Type::Mislabel, tau, seed};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t k = ds.num_classes();
    for (std::size_t n = 0; n < ds.size(); ++n) {
        for (std::size_t i = 0; i < k; ++i) {
            if (!ds.true_labels(n, i)) continue;
            if (unit(rng) >= tau) continue;
            // Destination drawn proportional to the true-label counts of the
            // other classes; a destination that is already positive stays 1.
            const double rest = total - static_cast<double>(counts[i]);
            double u = unit(rng) * rest;
            std::size_t dest = k;  // sentinel
            for (std::size_t j = 0; j < k; ++j) {
                if (j == i) continue;
                u -= static_cast<double>(counts[j]);
                if (u < 0.0) {
                    dest = j;
                    break;
                }
            }
            if (dest == k) {  // guard against accumulated rounding
                dest = (i + 1) % k;
            }
            out.observed_labels(n, i) = 0;
            out.observed_labels(n, dest) = 1;
        }
    }
    return out;
}

Dataset inject_random_flip(const Dataset& ds, double tau, std::uint64_t seed) {
    require_clean_observed(ds, "inject_random_flip");
    if (tau < 0.0 || tau > 1.0) throw ConfigError("inject_random_flip: tau must be in [0, 1]");

    Dataset out = ds;
    out.noise = {NoiseSpec::Type::Flip, tau, seed};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < out.observed_labels.size(); ++i) {
        if (unit(rng) < tau) {
            out.observed_labels.data()[i] = 1 - out.observed_labels.data()[i];
        }
    }
    return out;
}

Dataset inject_single_positive(const Dataset& ds, std::uint64_t seed) {
    require_clean_observed(ds, "inject_single_positive");

    Dataset out = ds;
    out.noise = {NoiseSpec::Type::SinglePositive, 0.0, seed};
    std::mt19937_64 rng(seed);

    const std::size_t k = ds.num_classes();
    std::vector<std::size_t> positives;
    for (std::size_t n = 0; n < ds.size(); ++n) {
        positives.clear();
        for (std::size_t c = 0; c < k; ++c) {
            if (ds.true_labels(n, c)) positives.push_back(c);
        }
        if (positives.empty()) {
            throw ContractError("inject_single_positive: instance " + std::to_string(n) +
                                " has no positive label");
        }
        std::uniform_int_distribution<std::size_t> pick(0, positives.size() - 1);
        const std::size_t keep = positives[pick(rng)];
        auto row = out.observed_labels.row(n);
        std::fill(row.begin(), row.end(), std::uint8_t{0});
        row[keep] = 1;
    }
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction) {
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
        throw ConfigError("split_dataset: val_fraction must lie in [0, 1)");
    }
    const std::size_t n = ds.size();
    const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * val_fraction);
    const std::size_t n_train = n - n_val;
    if (n_train == 0) throw ConfigError("split_dataset: no training rows left");

    auto take = [&ds](std::size_t begin, std::size_t count) {
        Dataset part;
        part.seed = ds.seed;
        part.noise = ds.noise;
        part.features = Matrix(count, ds.feature_dim());
        part.true_labels = ByteMatrix(count, ds.num_classes());
        part.observed_labels = ByteMatrix(count, ds.num_classes());
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t src = begin + i;
            std::copy(ds.features.row(src).begin(), ds.features.row(src).end(),
                      part.features.row(i).begin());
            std::copy(ds.true_labels.row(src).begin(), ds.true_labels.row(src).end(),
                      part.true_labels.row(i).begin());
            std::copy(ds.observed_labels.row(src).begin(), ds.observed_labels.row(src).end(),
                      part.observed_labels.row(i).begin());
        }
        return part;
    };
    return {take(0, n_train), take(n_train, n_val)};
}

double cls_imbalance(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw ContractError("cls_imbalance: empty counts");
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*lo == 0) throw ContractError("cls_imbalance: zero positive count makes ratio undefined");
    return static_cast<double>(*hi) / static_cast<double>(*lo);
}

double pn_imbalance(const Dataset& ds) {
    const auto pos = ds.observed_positive_counts();
    const std::size_t total_pos = std::accumulate(pos.begin(), pos.end(), std::size_t{0});
    if (total_pos == 0) throw ContractError("pn_imbalance: dataset has no positive labels");
    const std::size_t total = ds.size() * ds.num_classes();
    return static_cast<double>(total - total_pos) / static_cast<double>(total_pos);
}

}  // namespace balancemix
