#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "balancemix/datagen.hpp"
#include "balancemix/labelmgmt.hpp"
#include "balancemix/metrics.hpp"
#include "balancemix/mixing.hpp"
#include "balancemix/model.hpp"
#include "balancemix/sampling.hpp"

namespace balancemix {

enum class TrainMode { BalanceMix, BceBaseline };
enum class SamplerLabelSource { Refined, Original };

const char* train_mode_name(TrainMode m);
TrainMode parse_train_mode(const std::string& name);
const char* label_source_name(SamplerLabelSource s);
SamplerLabelSource parse_label_source(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t warmup_epochs = 5;
    std::size_t batch_size = 32;
    double alpha = 4.0;     // Beta(alpha, alpha) mixing coefficient
    double epsilon = 0.975; // re-labeling confidence threshold
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t hidden_dim = 64;
    std::uint64_t seed = 1;
    TrainMode mode = TrainMode::BalanceMix;
    SamplerLabelSource sampler_label_source = SamplerLabelSource::Refined;
    bool relabel_from_original = false;  // re-derive tags from the observed labels each epoch
    bool cosine_learning_rate = false;
    double augment_noise_sigma = 0.1;
    double augment_dropout = 0.1;
    int threads = 1;  // epoch-end analytics only; the training loop stays sequential

    void validate() const;  // throws ConfigError
};

struct EpochReport {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    LabelLedger::Counts counts;
    std::optional<double> sampler_entropy;
    MetricsSnapshot validation;
};

// Epoch-end analytics retained for the inspect command.
struct EpochDiagnostics {
    int epoch = 0;
    std::vector<double> sampler_probs;
    std::vector<double> presence;  // P(k)
    std::vector<double> absence;   // A(k)
    GmmBank bank;                  // empty until management starts
    LabelLedger::Counts counts;
};

struct TrainResult {
    ModelState model;
    std::vector<EpochReport> reports;
    std::vector<EpochDiagnostics> diagnostics;
    LabelLedger ledger;
};

// Composite loss over a mixed batch: full BCE for labels tagged C or R,
// posterior-weighted BCE for labels tagged U, mean over the batch.
// Assembled as per-label weights so the model's weighted batch loss
// realizes it exactly.
MiniBatch assemble_batch(const std::vector<MixedInstance>& instances);
double composite_loss(const ModelState& model, const std::vector<MixedInstance>& instances);

// One training step's mixed batch: pairs random-sampler rows with
// minority-sampler rows, one lambda per pair, ledger rows attached.
std::vector<MixedInstance> build_mixed_batch(const Dataset& dataset, const LabelLedger& ledger,
                                             const std::vector<std::size_t>& random_indices,
                                             const std::vector<std::size_t>& minority_indices,
                                             double alpha, std::mt19937_64& rng);

// Validation metrics for a model: confidence rankings against the true
// labels of valset, grouped by the supplied per-class positive counts
// (conventionally the training split's true counts).
MetricsSnapshot evaluate(const ModelState& model, const Dataset& valset,
                         const std::vector<std::size_t>& group_counts, const GroupSpec& spec);

// The full training loop. Warm-up epochs train on minority-augmented
// batches with the given labels and plain BCE; afterwards each epoch end
// refreshes the ledger (GMM fits + triage) and the sampler, and training
// switches to the composite loss. BceBaseline disables the minority
// sampler, mixing and management entirely. Deterministic under seed.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const Dataset& valset,
                  const GroupSpec& group_spec);

}  // namespace balancemix
