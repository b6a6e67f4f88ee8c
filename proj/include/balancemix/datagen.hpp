#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "balancemix/matrix.hpp"

namespace balancemix {

struct NoiseSpec {
    enum class Type { None, Mislabel, Flip, SinglePositive };

    Type type = Type::None;
    double tau = 0.0;
    std::uint64_t seed = 0;

    static const char* type_name(Type t);
    static Type parse_type(const std::string& name);
};

// A synthetic multi-label dataset. true_labels never change after
// generation; noise injectors rewrite observed_labels only.
struct Dataset {
    Matrix features;            // [N x d]
    ByteMatrix true_labels;     // [N x K]
    ByteMatrix observed_labels; // [N x K]
    std::uint64_t seed = 0;
    NoiseSpec noise;

    std::size_t size() const { return features.rows(); }
    std::size_t feature_dim() const { return features.cols(); }
    std::size_t num_classes() const { return true_labels.cols(); }

    // Per-class positive/negative counts over the observed labels
    // (N_i and N'_i; they sum to N for every class).
    std::vector<std::size_t> observed_positive_counts() const;
    std::vector<std::size_t> observed_negative_counts() const;
    std::vector<std::size_t> true_positive_counts() const;

    // Fraction of the N*K label entries where observed differs from true.
    double label_disagreement() const;
};

// Controls for the generator. Positive-label counts decay geometrically by
// class index (decay_ratio 1.0 = balanced, smaller = more head/tail
// imbalance; the implied class-imbalance ratio is decay_ratio^-(K-1)).
// label_correlation sets how often extra positives co-occur beyond the one
// guaranteed primary class. Features are sums of per-class Gaussian
// prototypes plus noise with sigma = 1/separability.
struct GeneratorConfig {
    std::size_t n = 1000;
    std::size_t feature_dim = 16;
    std::size_t num_classes = 4;
    double decay_ratio = 1.0;
    double label_correlation = 0.2;
    double separability = 4.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError, incl. infeasible tail (< 1 expected positive)

    static double decay_for_imbalance(double cls_imbalance, std::size_t num_classes);
};

Dataset generate(const GeneratorConfig& config);

// Class-dependent mislabeling transition table: row i holds
// rho_{i->j} = tau * N_j / (total_positives - N_i) for j != i, 0 on the
// diagonal, so each row sums to tau exactly.
Matrix mislabel_transition_table(const std::vector<std::size_t>& positive_counts, double tau);

// Each injector requires observed == true (noise is applied to clean data,
// one model per run) and is deterministic given (dataset, tau, seed).
Dataset inject_mislabeling(const Dataset& ds, double tau, std::uint64_t seed);
Dataset inject_random_flip(const Dataset& ds, double tau, std::uint64_t seed);
Dataset inject_single_positive(const Dataset& ds, std::uint64_t seed);

// Head/tail split into (train, validation). Rows are i.i.d. by
// construction, so a contiguous split is unbiased; both halves keep the
// generator's prototypes, which is what makes validation meaningful.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction);

// max_i N_i / min_i N_i. Throws ContractError on a zero count.
double cls_imbalance(const std::vector<std::size_t>& counts);

// Total observed negatives over total observed positives.
double pn_imbalance(const Dataset& ds);

}  // namespace balancemix
