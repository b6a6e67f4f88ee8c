#include "balancemix/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace balancemix {

void GroupSpec::validate() const {
    if (!(many_min > few_max) || !(few_max > 0.0)) {
        throw ConfigError("GroupSpec: need many_min > few_max > 0");
    }
}

GroupSpec GroupSpec::absolute(double many_min, double few_max) {
    GroupSpec spec{many_min, few_max};
    spec.validate();
    return spec;
}

GroupSpec GroupSpec::fractions_of(std::size_t n, double many_fraction, double few_fraction) {
    GroupSpec spec{many_fraction * static_cast<double>(n),
                   few_fraction * static_cast<double>(n)};
    spec.validate();
    return spec;
}

ShotGroup shot_group(std::size_t positive_count, const GroupSpec& spec) {
    const double c = static_cast<double>(positive_count);
    if (c >= spec.many_min) return ShotGroup::Many;
    if (c < spec.few_max) return ShotGroup::Few;
    return ShotGroup::Medium;
}

const char* shot_group_name(ShotGroup g) {
    switch (g) {
        case ShotGroup::Many: return "many";
        case ShotGroup::Medium: return "medium";
        case ShotGroup::Few: return "few";
    }
    return "?";
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> truths) {
    if (scores.size() != truths.size()) {
        throw ContractError("average_precision: score/truth length mismatch");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    std::size_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (truths[order[rank]]) {
            ++hits;
            precision_sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return precision_sum / static_cast<double>(hits);
}

GroupedMap grouped_map(const std::vector<std::optional<double>>& per_class_ap,
                       const std::vector<std::size_t>& positive_counts, const GroupSpec& spec) {
    if (per_class_ap.size() != positive_counts.size()) {
        throw ContractError("grouped_map: AP/count length mismatch");
    }
    spec.validate();

    double sum_all = 0.0;
    std::size_t n_all = 0;
    double sums[3] = {0.0, 0.0, 0.0};
    std::size_t ns[3] = {0, 0, 0};

    for (std::size_t k = 0; k < per_class_ap.size(); ++k) {
        if (!per_class_ap[k].has_value()) continue;
        const double ap = *per_class_ap[k];
        sum_all += ap;
        ++n_all;
        const auto g = static_cast<std::size_t>(shot_group(positive_counts[k], spec));
        sums[g] += ap;
        ++ns[g];
    }

    GroupedMap out;
    if (n_all > 0) out.all = sum_all / static_cast<double>(n_all);
    auto group_mean = [&](ShotGroup g) -> std::optional<double> {
        const auto i = static_cast<std::size_t>(g);
        if (ns[i] == 0) return std::nullopt;
        return sums[i] / static_cast<double>(ns[i]);
    };
    out.many = group_mean(ShotGroup::Many);
    out.medium = group_mean(ShotGroup::Medium);
    out.few = group_mean(ShotGroup::Few);
    return out;
}

ManagementDiagnostics selection_metrics(const LabelLedger& ledger, const ByteMatrix& true_labels,
                                        const ByteMatrix& observed_labels) {
    if (ledger.num_instances != true_labels.rows() || ledger.num_classes != true_labels.cols() ||
        ledger.num_instances != observed_labels.rows() ||
        ledger.num_classes != observed_labels.cols()) {
        throw ContractError("selection_metrics: ledger/label shape mismatch");
    }

    ManagementDiagnostics d;
    d.total_labels = ledger.working.size();

    for (std::size_t i = 0; i < ledger.num_instances; ++i) {
        for (std::size_t k = 0; k < ledger.num_classes; ++k) {
            const std::size_t idx = i * ledger.num_classes + k;
            const bool correct = ledger.working[idx] == true_labels(i, k);
            if (observed_labels(i, k) == true_labels(i, k)) ++d.true_clean_count;
            switch (ledger.reliability[idx]) {
                case Reliability::Clean:
                    ++d.clean_count;
                    if (correct) ++d.clean_correct;
                    break;
                case Reliability::Relabeled:
                    ++d.relabel_count;
                    if (correct) ++d.relabel_correct;
                    break;
                case Reliability::Ambiguous:
                    ++d.ambiguous_count;
                    break;
            }
        }
    }

    if (d.clean_count > 0) {
        d.label_precision = static_cast<double>(d.clean_correct) /
                            static_cast<double>(d.clean_count);
    }
    if (d.true_clean_count > 0) {
        d.label_recall = static_cast<double>(d.clean_correct) /
                         static_cast<double>(d.true_clean_count);
    }
    d.relabel_proportion =
        static_cast<double>(d.relabel_count) / static_cast<double>(d.total_labels);
    if (d.relabel_count > 0) {
        d.relabel_accuracy = static_cast<double>(d.relabel_correct) /
                             static_cast<double>(d.relabel_count);
    }
    return d;
}

MetricsSnapshot score_confidences(const Matrix& confidences, const ByteMatrix& true_labels,
                                  const std::vector<std::size_t>& group_counts,
                                  const GroupSpec& spec) {
    if (confidences.rows() != true_labels.rows() || confidences.cols() != true_labels.cols()) {
        throw ContractError("score_confidences: shape mismatch");
    }
    if (group_counts.size() != confidences.cols()) {
        throw ContractError("score_confidences: group count length mismatch");
    }
    const std::size_t n = confidences.rows();
    const std::size_t k = confidences.cols();

    MetricsSnapshot snap;
    snap.group_counts = group_counts;
    snap.per_class_ap.resize(k);

    std::vector<double> scores(n);
    std::vector<std::uint8_t> truths(n);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = confidences(i, c);
            truths[i] = true_labels(i, c);
        }
        snap.per_class_ap[c] = average_precision(scores, truths);
    }
    snap.map = grouped_map(snap.per_class_ap, group_counts, spec);
    return snap;
}

}  // namespace balancemix
