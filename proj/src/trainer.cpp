#include "balancemix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace balancemix {

const char* train_mode_name(TrainMode m) {
    return m == TrainMode::BalanceMix ? "balancemix" : "bce_baseline";
}

TrainMode parse_train_mode(const std::string& name) {
    if (name == "balancemix") return TrainMode::BalanceMix;
    if (name == "bce_baseline") return TrainMode::BceBaseline;
    throw ConfigError("unknown train mode: " + name);
}

const char* label_source_name(SamplerLabelSource s) {
    return s == SamplerLabelSource::Refined ? "refined" : "original";
}

SamplerLabelSource parse_label_source(const std::string& name) {
    if (name == "refined") return SamplerLabelSource::Refined;
    if (name == "original") return SamplerLabelSource::Original;
    throw ConfigError("unknown sampler label source: " + name);
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    // warmup == epochs is allowed: management simply never activates.
    if (warmup_epochs > epochs) throw ConfigError("train: warmup_epochs must be <= epochs");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(alpha > 0.0)) throw ConfigError("train: alpha must be positive");
    if (epsilon <= 0.5 || epsilon > 1.0) throw ConfigError("train: epsilon must lie in (0.5, 1]");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be nonnegative");
    if (hidden_dim == 0) throw ConfigError("train: hidden_dim must be positive");
    if (augment_noise_sigma < 0.0 || augment_dropout < 0.0 || augment_dropout > 1.0) {
        throw ConfigError("train: invalid augmentation parameters");
    }
    if (threads < 1) throw ConfigError("train: threads must be >= 1");
}

MiniBatch assemble_batch(const std::vector<MixedInstance>& instances) {
    if (instances.empty()) throw ContractError("assemble_batch: empty batch");
    const std::size_t b = instances.size();
    const std::size_t d = instances.front().features.size();
    const std::size_t k = instances.front().labels.size();

    MiniBatch batch;
    batch.features = Matrix(b, d);
    batch.labels = Matrix(b, k);
    batch.weights = Matrix(b, k);

    for (std::size_t i = 0; i < b; ++i) {
        const MixedInstance& inst = instances[i];
        if (inst.features.size() != d || inst.labels.size() != k ||
            inst.reliability.size() != k || inst.ambiguous_weight.size() != k) {
            throw ContractError("assemble_batch: inconsistent instance shapes");
        }
        std::copy(inst.features.begin(), inst.features.end(), batch.features.row(i).begin());
        std::copy(inst.labels.begin(), inst.labels.end(), batch.labels.row(i).begin());
        for (std::size_t c = 0; c < k; ++c) {
            batch.weights(i, c) = inst.reliability[c] == Reliability::Ambiguous
                                      ? inst.ambiguous_weight[c]
                                      : 1.0;
        }
    }
    return batch;
}

double composite_loss(const ModelState& model, const std::vector<MixedInstance>& instances) {
    return batch_loss_and_grads(model, assemble_batch(instances)).first;
}

namespace {

TaggedInstance tagged_row(const Dataset& dataset, const LabelLedger& ledger, std::size_t n) {
    return TaggedInstance{dataset.features.row(n), ledger.label_row(n), ledger.tag_row(n),
                          ledger.posterior_row(n)};
}

}  // namespace

std::vector<MixedInstance> build_mixed_batch(const Dataset& dataset, const LabelLedger& ledger,
                                             const std::vector<std::size_t>& random_indices,
                                             const std::vector<std::size_t>& minority_indices,
                                             double alpha, std::mt19937_64& rng) {
    if (random_indices.size() != minority_indices.size()) {
        throw ContractError("build_mixed_batch: sampler batches differ in size");
    }
    std::vector<MixedInstance> batch;
    batch.reserve(random_indices.size());
    for (std::size_t i = 0; i < random_indices.size(); ++i) {
        const double lambda = draw_lambda(alpha, rng);
        batch.push_back(mix(tagged_row(dataset, ledger, random_indices[i]),
                            tagged_row(dataset, ledger, minority_indices[i]), lambda));
    }
    return batch;
}

MetricsSnapshot evaluate(const ModelState& model, const Dataset& valset,
                         const std::vector<std::size_t>& group_counts, const GroupSpec& spec) {
    const Matrix conf = forward(model, valset.features);
    return score_confidences(conf, valset.true_labels, group_counts, spec);
}

namespace {

// Plain-BCE batch over observed labels, all weights 1.
MiniBatch plain_batch(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    const std::size_t b = indices.size();
    const std::size_t d = dataset.feature_dim();
    const std::size_t k = dataset.num_classes();
    MiniBatch batch;
    batch.features = Matrix(b, d);
    batch.labels = Matrix(b, k);
    batch.weights = Matrix(b, k, 1.0);
    for (std::size_t i = 0; i < b; ++i) {
        const auto x = dataset.features.row(indices[i]);
        std::copy(x.begin(), x.end(), batch.features.row(i).begin());
        const auto y = dataset.observed_labels.row(indices[i]);
        for (std::size_t c = 0; c < k; ++c) batch.labels(i, c) = y[c];
    }
    return batch;
}

double epoch_learning_rate(const TrainConfig& config, std::size_t epoch) {
    if (!config.cosine_learning_rate || config.epochs <= 1) return config.learning_rate;
    const double progress =
        static_cast<double>(epoch - 1) / static_cast<double>(config.epochs - 1);
    return 0.5 * config.learning_rate * (1.0 + std::cos(progress * 3.14159265358979323846));
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset, const Dataset& valset,
                  const GroupSpec& group_spec) {
    config.validate();
    group_spec.validate();
    if (dataset.feature_dim() != valset.feature_dim() ||
        dataset.num_classes() != valset.num_classes()) {
        throw ContractError("train: dataset and valset disagree on d or K");
    }
    const std::size_t n = dataset.size();
    const std::size_t k = dataset.num_classes();
    const std::size_t steps = n / config.batch_size;
    if (steps == 0) throw ConfigError("train: batch_size exceeds dataset size");

    std::mt19937_64 rng(config.seed);
    ModelState model = init_model(dataset.feature_dim(), config.hidden_dim, k, rng());
    OptimizerState opt = OptimizerState::for_model(model, config.learning_rate, config.momentum,
                                                   config.weight_decay);

    const std::vector<std::size_t> group_counts = dataset.true_positive_counts();
    const bool balancemix = config.mode == TrainMode::BalanceMix;

    LabelLedger ledger = LabelLedger::from_observed(dataset.observed_labels);
    SamplerState sampler;  // uniform until the first epoch-end update
    EpochShuffler shuffler(n);

    FeatureAugmenter augmenter = FeatureAugmenter::for_features(
        dataset.features, config.augment_noise_sigma, config.augment_dropout);

    TrainResult result;
    result.reports.reserve(config.epochs);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        opt.learning_rate = epoch_learning_rate(config, epoch);
        shuffler.begin_epoch(rng);
        double loss_sum = 0.0;

        for (std::size_t step = 0; step < steps; ++step) {
            const auto random_indices = shuffler.next_batch(config.batch_size, rng);
            double loss;
            ModelState grads;
            if (balancemix) {
                const auto minority_indices =
                    draw_minority_batch(sampler, n, config.batch_size, rng);
                const auto mixed = build_mixed_batch(dataset, ledger, random_indices,
                                                     minority_indices, config.alpha, rng);
                std::tie(loss, grads) = batch_loss_and_grads(model, assemble_batch(mixed));
            } else {
                std::tie(loss, grads) = batch_loss_and_grads(model, plain_batch(dataset, random_indices));
            }
            sgd_step(model, opt, grads);
            loss_sum += loss;
        }

        EpochReport report;
        report.epoch = static_cast<int>(epoch);
        report.mean_loss = loss_sum / static_cast<double>(steps);

        EpochDiagnostics diag;
        diag.epoch = report.epoch;

        if (balancemix) {
            // Frozen end-of-epoch snapshot drives management and the sampler.
            const std::uint64_t management_seed = rng();
            if (epoch >= config.warmup_epochs && config.warmup_epochs < config.epochs) {
                ManagementOptions mopts;
                mopts.epsilon = config.epsilon;
                mopts.augmenter = augmenter;
                mopts.seed = management_seed;
                mopts.threads = config.threads;
                if (config.relabel_from_original) {
                    ledger = LabelLedger::from_observed(dataset.observed_labels);
                }
                ManagementResult mgmt = manage_labels(model, dataset.features, ledger, mopts);
                ledger = std::move(mgmt.ledger);
                diag.bank = std::move(mgmt.bank);
            }
            const Matrix conf = forward(model, dataset.features);
            const ByteMatrix sampler_labels =
                config.sampler_label_source == SamplerLabelSource::Refined
                    ? ledger.working_matrix()
                    : dataset.observed_labels;
            const ConfidenceTable table = update_confidence_table(conf, sampler_labels);
            sampler = build_sampler_state(table, sampler_labels, report.epoch);

            report.sampler_entropy = sampler_entropy(sampler.probs);
            diag.sampler_probs = sampler.probs;
            diag.presence = table.presence;
            diag.absence = table.absence;
        }

        report.counts = ledger.counts();
        diag.counts = report.counts;
        report.validation = evaluate(model, valset, group_counts, group_spec);

        result.reports.push_back(std::move(report));
        result.diagnostics.push_back(std::move(diag));
    }

    result.model = std::move(model);
    result.ledger = std::move(ledger);
    return result;
}

}  // namespace balancemix
