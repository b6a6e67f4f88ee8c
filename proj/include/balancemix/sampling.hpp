#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "balancemix/matrix.hpp"

namespace balancemix {

// Instance scores are floored here before inversion.
inline constexpr double kScoreFloor = 1e-6;

// Per-class mean confidence in presence (P) and absence (A) over the current
// working labels. Entries with empty support are NaN and must never be read.
struct ConfidenceTable {
    std::vector<double> presence;               // P(k), mean f over positives
    std::vector<double> absence;                // A(k), mean (1-f) over negatives
    std::vector<std::size_t> presence_support;  // |P_k|
    std::vector<std::size_t> absence_support;   // |A_k|

    std::size_t num_classes() const { return presence.size(); }
};

ConfidenceTable update_confidence_table(const Matrix& confidences, const ByteMatrix& labels);

// Sum over classes of P(k) for positive labels and A(k) for negative ones,
// floored at kScoreFloor. Throws ContractError if an undefined table entry
// is referenced.
double instance_score(const ConfidenceTable& table, std::span<const std::uint8_t> labels);

// Normalized inverse scores (the minority-sampler distribution).
std::vector<double> sampling_distribution(const std::vector<double>& scores);

struct SamplerState {
    std::vector<double> scores;  // [N]
    std::vector<double> probs;   // [N], sums to 1
    int epoch_of_last_update = -1;

    bool ready() const { return !probs.empty(); }
};

SamplerState build_sampler_state(const ConfidenceTable& table, const ByteMatrix& labels,
                                 int epoch);

// Random sampler: one shuffled permutation per epoch, consumed batch by
// batch without replacement.
class EpochShuffler {
public:
    explicit EpochShuffler(std::size_t n);

    void begin_epoch(std::mt19937_64& rng);
    std::vector<std::size_t> next_batch(std::size_t batch_size, std::mt19937_64& rng);

    std::size_t remaining() const { return order_.size() - pos_; }

private:
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

// First b entries of a fresh permutation of [0, n).
std::vector<std::size_t> draw_random_batch(std::size_t n, std::size_t batch_size,
                                           std::mt19937_64& rng);

// Minority sampler: i.i.d. draws with replacement from state.probs
// (oversampling semantics). Falls back to uniform before the first
// epoch-end update.
std::vector<std::size_t> draw_minority_batch(const SamplerState& state, std::size_t n,
                                             std::size_t batch_size, std::mt19937_64& rng);

double sampler_entropy(const std::vector<double>& probs);

}  // namespace balancemix
