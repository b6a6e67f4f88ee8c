#include "balancemix/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace balancemix {

ConfidenceTable update_confidence_table(const Matrix& confidences, const ByteMatrix& labels) {
    if (confidences.rows() != labels.rows() || confidences.cols() != labels.cols()) {
        throw ContractError("update_confidence_table: confidence/label shape mismatch");
    }
    const std::size_t n = labels.rows();
    const std::size_t k = labels.cols();

    ConfidenceTable table;
    table.presence.assign(k, 0.0);
    table.absence.assign(k, 0.0);
    table.presence_support.assign(k, 0);
    table.absence_support.assign(k, 0);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            const double f = confidences(i, c);
            if (labels(i, c)) {
                table.presence[c] += f;
                ++table.presence_support[c];
            } else {
                table.absence[c] += 1.0 - f;
                ++table.absence_support[c];
            }
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        table.presence[c] = table.presence_support[c] > 0
                                ? table.presence[c] / static_cast<double>(table.presence_support[c])
                                : std::numeric_limits<double>::quiet_NaN();
        table.absence[c] = table.absence_support[c] > 0
                               ? table.absence[c] / static_cast<double>(table.absence_support[c])
                               : std::numeric_limits<double>::quiet_NaN();
    }
    return table;
}

double instance_score(const ConfidenceTable& table, std::span<const std::uint8_t> labels) {
    if (labels.size() != table.num_classes()) {
        throw ContractError("instance_score: label width does not match table");
    }
    double score = 0.0;
    for (std::size_t c = 0; c < labels.size(); ++c) {
        if (labels[c]) {
            if (table.presence_support[c] == 0) {
                throw ContractError("instance_score: P(k) undefined for class " +
                                    std::to_string(c));
            }
            score += table.presence[c];
        } else {
            if (table.absence_support[c] == 0) {
                throw ContractError("instance_score: A(k) undefined for class " +
                                    std::to_string(c));
            }
            score += table.absence[c];
        }
    }
    return std::max(score, kScoreFloor);
}

std::vector<double> sampling_distribution(const std::vector<double>& scores) {
    std::vector<double> probs(scores.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!(scores[i] > 0.0)) {
            throw ContractError("sampling_distribution: scores must be positive");
        }
        probs[i] = 1.0 / scores[i];
        norm += probs[i];
    }
    for (auto& p : probs) p /= norm;
    return probs;
}

SamplerState build_sampler_state(const ConfidenceTable& table, const ByteMatrix& labels,
                                 int epoch) {
    SamplerState state;
    state.scores.resize(labels.rows());
    for (std::size_t i = 0; i < labels.rows(); ++i) {
        state.scores[i] = instance_score(table, labels.row(i));
    }
    state.probs = sampling_distribution(state.scores);
    state.epoch_of_last_update = epoch;
    return state;
}

EpochShuffler::EpochShuffler(std::size_t n) : order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = n;  // force a shuffle before the first batch
}

void EpochShuffler::begin_epoch(std::mt19937_64& rng) {
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
}

std::vector<std::size_t> EpochShuffler::next_batch(std::size_t batch_size,
                                                   std::mt19937_64& rng) {
    if (batch_size > order_.size()) {
        throw ContractError("next_batch: batch size exceeds dataset size");
    }
    if (pos_ + batch_size > order_.size()) begin_epoch(rng);
    std::vector<std::size_t> batch(order_.begin() + pos_, order_.begin() + pos_ + batch_size);
    pos_ += batch_size;
    return batch;
}

std::vector<std::size_t> draw_random_batch(std::size_t n, std::size_t batch_size,
                                           std::mt19937_64& rng) {
    if (batch_size > n) throw ContractError("draw_random_batch: batch size exceeds n");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(batch_size);
    return order;
}

std::vector<std::size_t> draw_minority_batch(const SamplerState& state, std::size_t n,
                                             std::size_t batch_size, std::mt19937_64& rng) {
    if (batch_size > n) throw ContractError("draw_minority_batch: batch size exceeds n");
    std::vector<std::size_t> batch(batch_size);
    if (!state.ready()) {
        std::uniform_int_distribution<std::size_t> uniform(0, n - 1);
        for (auto& idx : batch) idx = uniform(rng);
        return batch;
    }
    if (state.probs.size() != n) {
        throw ContractError("draw_minority_batch: sampler state size mismatch");
    }
    std::discrete_distribution<std::size_t> dist(state.probs.begin(), state.probs.end());
    for (auto& idx : batch) idx = dist(rng);
    return batch;
}

double sampler_entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (const double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

}  // namespace balancemix
