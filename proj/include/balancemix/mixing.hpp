#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "balancemix/common.hpp"

namespace balancemix {

// Per-label reliability after label-wise management.
enum class Reliability : std::uint8_t {
    Clean = 0,      // small-loss posterior > 0.5
    Relabeled = 1,  // rewritten by the confidence-ensemble rule
    Ambiguous = 2,  // kept with its loss decayed by the clean posterior
};

const char* reliability_name(Reliability r);

// max(lambda', 1 - lambda'): folds a Beta draw into [0.5, 1] so the
// random-sampler instance always dominates the mix.
double fold_lambda(double lambda_prime);

// lambda' ~ Beta(alpha, alpha) via two gamma draws, then folded.
double draw_lambda(double alpha, std::mt19937_64& rng);

// A view of one training instance with its ledger row.
struct TaggedInstance {
    std::span<const double> features;
    std::span<const std::uint8_t> labels;
    std::span<const Reliability> reliability;
    std::span<const double> ambiguous_weight;
};

struct MixedInstance {
    std::vector<double> features;          // lambda * x_R + (1-lambda) * x_M
    std::vector<double> labels;            // lambda * y_R + (1-lambda) * y_M
    std::vector<Reliability> reliability;  // inherited from the random side
    std::vector<double> ambiguous_weight;  // inherited from the random side
    double lambda = 1.0;
};

// Convex interpolation with weight lambda on the random-sampler instance.
// Reliability tags and ambiguous weights are copied from the random side,
// which dominates because lambda >= 0.5. Throws ContractError when lambda
// is outside [0.5, 1] or the instances disagree on d or K.
MixedInstance mix(const TaggedInstance& random_side, const TaggedInstance& minority_side,
                  double lambda);

}  // namespace balancemix
