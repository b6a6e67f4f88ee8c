#pragma once

#include <optional>
#include <span>
#include <vector>

#include "balancemix/labelmgmt.hpp"
#include "balancemix/matrix.hpp"

namespace balancemix {

// Shot-group thresholds on per-class positive-label counts. Classes with
// count >= many_min are many-shot, count < few_max are few-shot, the rest
// medium-shot. Defaults follow the benchmark convention of 10,000 / 1,000;
// fractions_of scales them to a small dataset.
struct GroupSpec {
    double many_min = 10000.0;
    double few_max = 1000.0;

    void validate() const;  // many_min > few_max > 0

    static GroupSpec absolute(double many_min, double few_max);
    static GroupSpec fractions_of(std::size_t n, double many_fraction = 0.25,
                                  double few_fraction = 0.05);
};

enum class ShotGroup { Many, Medium, Few };
ShotGroup shot_group(std::size_t positive_count, const GroupSpec& spec);
const char* shot_group_name(ShotGroup g);

// Average precision of the score ranking against binary truths. Ties are
// broken by ascending index. Returns nullopt when there is no positive.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> truths);

struct GroupedMap {
    std::optional<double> all;
    std::optional<double> many;
    std::optional<double> medium;
    std::optional<double> few;
};

// Unweighted mean of the defined per-class APs, overall and per shot group.
// Empty groups (or groups whose APs are all undefined) stay absent.
GroupedMap grouped_map(const std::vector<std::optional<double>>& per_class_ap,
                       const std::vector<std::size_t>& positive_counts, const GroupSpec& spec);

struct ManagementDiagnostics {
    std::optional<double> label_precision;   // correct C / |C|
    std::optional<double> label_recall;      // correct C / |L|
    double relabel_proportion = 0.0;         // |R| / |D|
    std::optional<double> relabel_accuracy;  // correct R / |R|

    std::size_t clean_count = 0;       // |C|
    std::size_t relabel_count = 0;     // |R|
    std::size_t ambiguous_count = 0;   // |U|
    std::size_t total_labels = 0;      // |D| = N*K
    std::size_t clean_correct = 0;
    std::size_t relabel_correct = 0;
    std::size_t true_clean_count = 0;  // |L| = #(observed == true)
};

// Selection and re-labeling quality of a ledger against ground truth.
ManagementDiagnostics selection_metrics(const LabelLedger& ledger, const ByteMatrix& true_labels,
                                        const ByteMatrix& observed_labels);

// One evaluation snapshot: per-class APs of confidence rankings against the
// true labels, plus the grouped means.
struct MetricsSnapshot {
    GroupedMap map;
    std::vector<std::optional<double>> per_class_ap;
    std::vector<std::size_t> group_counts;  // the counts used for grouping
};

MetricsSnapshot score_confidences(const Matrix& confidences, const ByteMatrix& true_labels,
                                  const std::vector<std::size_t>& group_counts,
                                  const GroupSpec& spec);

}  // namespace balancemix
