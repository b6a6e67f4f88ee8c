#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "balancemix/matrix.hpp"
#include "balancemix/mixing.hpp"
#include "balancemix/model.hpp"

namespace balancemix {

struct GmmFitOptions {
    int max_iterations = 100;
    double tolerance = 1e-6;        // absolute log-likelihood change
    double variance_floor = 1e-8;
    double responsibility_floor = 1e-12;
    std::size_t min_points = 20;    // below this the fit degenerates to all-clean
    // A converged fit only counts as bimodal when the mode gap exceeds
    // this many summed standard deviations; otherwise fall back to
    // all-clean (the small-loss mode would be a slice of a single blob).
    double min_separation = 4.0;
};

// Bi-modal univariate Gaussian mixture over BCE losses. After fitting,
// component 0 is the small-loss (clean) mode.
struct Gmm1D {
    enum class FitStatus { Converged, DegenerateFallback };

    std::array<double, 2> means{0.0, 0.0};
    std::array<double, 2> variances{1.0, 1.0};
    std::array<double, 2> weights{0.5, 0.5};
    FitStatus status = FitStatus::DegenerateFallback;
    int iterations = 0;
    std::vector<double> loglik_trace;  // one entry per EM iteration

    double mean_clean() const { return means[0]; }
    double mean_noisy() const { return means[1]; }
};

// EM with percentile initialization (20th/80th), run until the
// log-likelihood change drops below tolerance or max_iterations is hit.
// Fewer than min_points samples or zero spread yields DegenerateFallback,
// which treats every label of that class/polarity as clean.
Gmm1D fit_gmm(std::span<const double> losses, const GmmFitOptions& options = {});

// Posterior probability that a loss belongs to the small-loss mode.
// Degenerate fits return 1. Evaluated in log space, so extreme losses
// cannot produce 0/0.
double clean_posterior(const Gmm1D& gmm, double loss);

struct GmmPair {
    Gmm1D positive;  // losses of labels observed as 1
    Gmm1D negative;  // losses of labels observed as 0
};
using GmmBank = std::vector<GmmPair>;  // one pair per class

struct LossPartition {
    std::vector<double> positive;
    std::vector<double> negative;
};

// Per-class BCE losses split by the current working label polarity.
std::vector<LossPartition> collect_loss_partitions(const Matrix& confidences,
                                                   const ByteMatrix& working_labels);

// Generic two-view feature augmentation standing in for image RandAug:
// additive Gaussian noise scaled per dimension by the dataset feature
// spread, followed by random feature dropout.
struct FeatureAugmenter {
    double noise_sigma = 0.1;
    double dropout_rate = 0.1;
    std::vector<double> feature_std;  // per-dimension, from the training features

    void apply(std::span<const double> in, std::span<double> out, std::mt19937_64& rng) const;

    static FeatureAugmenter for_features(const Matrix& features, double noise_sigma = 0.1,
                                         double dropout_rate = 0.1);
};

// Mean confidence over two independently augmented views of one instance.
std::vector<double> two_view_confidence_row(const ModelState& model,
                                            std::span<const double> features,
                                            const FeatureAugmenter& augmenter,
                                            std::mt19937_64& rng);

// Full-dataset version. Each row's augmentation stream is derived from
// (seed, row), so the result is identical no matter how many threads run.
Matrix two_view_confidences(const ModelState& model, const Matrix& features,
                            const FeatureAugmenter& augmenter, std::uint64_t seed,
                            int threads = 1);

// Per-(instance, class) working label, reliability tag and clean posterior.
// Starts from the observed labels with every tag Clean and posterior 1.
// The original observed labels ride along so a label that was re-labeled in
// an earlier pass keeps its R tag while the corrected value survives
// triage (the re-labeled set is cumulative, like the reported proportions).
struct LabelLedger {
    std::size_t num_instances = 0;
    std::size_t num_classes = 0;
    std::vector<std::uint8_t> working;
    std::vector<Reliability> reliability;
    std::vector<double> clean_posterior;
    std::vector<std::uint8_t> original;

    static LabelLedger from_observed(const ByteMatrix& observed);

    std::uint8_t label(std::size_t n, std::size_t k) const {
        return working[n * num_classes + k];
    }
    Reliability tag(std::size_t n, std::size_t k) const {
        return reliability[n * num_classes + k];
    }
    double posterior(std::size_t n, std::size_t k) const {
        return clean_posterior[n * num_classes + k];
    }

    std::span<const std::uint8_t> label_row(std::size_t n) const {
        return {working.data() + n * num_classes, num_classes};
    }
    std::span<const Reliability> tag_row(std::size_t n) const {
        return {reliability.data() + n * num_classes, num_classes};
    }
    std::span<const double> posterior_row(std::size_t n) const {
        return {clean_posterior.data() + n * num_classes, num_classes};
    }

    ByteMatrix working_matrix() const;

    struct Counts {
        std::size_t clean = 0;
        std::size_t relabeled = 0;
        std::size_t ambiguous = 0;
        std::size_t total() const { return clean + relabeled + ambiguous; }
    };
    Counts counts() const;
};

struct TriageDecision {
    Reliability tag;
    std::uint8_t label;
};

// The label-wise decision rule: clean when the posterior exceeds 0.5,
// otherwise re-label when the two-view ensemble confidence clears epsilon
// from either side, otherwise ambiguous.
TriageDecision triage_label(double clean_posterior, double ensemble_confidence, double epsilon,
                            std::uint8_t current_label);

struct ManagementOptions {
    double epsilon = 0.975;  // must exceed 0.5 or the re-label branches overlap
    FeatureAugmenter augmenter;
    std::uint64_t seed = 0;
    GmmFitOptions gmm;
    int threads = 1;
};

struct ManagementResult {
    LabelLedger ledger;
    GmmBank bank;
    Matrix ensemble_confidences;  // [N x K], kept so re-label decisions can be replayed
};

// One management pass over the full dataset with a frozen model: fit the
// 2K GMMs to the losses under the base ledger's working labels, compute
// two-view ensemble confidences, then triage every label.
ManagementResult manage_labels(const ModelState& model, const Matrix& features,
                               const LabelLedger& base, const ManagementOptions& options);

}  // namespace balancemix
