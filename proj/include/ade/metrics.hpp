#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace ade {

/// Mean binary cross-entropy of probabilities against +1/-1 labels, with
/// probabilities clamped to [1e-12, 1 - 1e-12].
inline double bce_mean(std::span<const double> probs, std::span<const int> labels) {
    if (probs.size() != labels.size())
        throw std::invalid_argument("bce_mean: " + std::to_string(probs.size()) +
                                    " probabilities vs " + std::to_string(labels.size()) +
                                    " labels");
    if (probs.empty()) throw std::invalid_argument("bce_mean: empty input");
    double total = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        const double p = std::min(std::max(probs[i], 1e-12), 1.0 - 1e-12);
        const double y = labels[i] == 1 ? 1.0 : 0.0;
        total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return total / static_cast<double>(probs.size());
}

/// Rank-based AUC (probability that a random positive outscores a random
/// negative, ties counting one half). Undefined when only one class is
/// present.
inline std::optional<double> auc_rank(std::span<const double> scores,
                                      std::span<const int> labels) {
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    size_t n_pos = 0;
    double rank_sum = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (labels[k] == 1) {
            ++n_pos;
            rank_sum += rank[k];
        }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double u = rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct MetricsReport {
    double accuracy = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> auc;
    size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double threshold = 0.5;
};

/// Confusion counts at the threshold (score >= threshold predicts +1) plus
/// rank-based AUC. precision/recall/auc are absent when undefined.
inline MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold = 0.5) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("compute_metrics: need equal-length, non-empty inputs");
    MetricsReport r;
    r.threshold = threshold;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] == 1;
        if (predicted && actual)
            ++r.tp;
        else if (predicted && !actual)
            ++r.fp;
        else if (!predicted && !actual)
            ++r.tn;
        else
            ++r.fn;
    }
    const size_t total = scores.size();
    r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(total);
    if (r.tp + r.fp > 0) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
    if (r.tp + r.fn > 0) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    r.auc = auc_rank(scores, labels);
    return r;
}

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision ? nlohmann::ordered_json(*r.precision) : nullptr;
    j["recall"] = r.recall ? nlohmann::ordered_json(*r.recall) : nullptr;
    j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nullptr;
    j["threshold"] = r.threshold;
    j["tp"] = r.tp;
    j["fp"] = r.fp;
    j["tn"] = r.tn;
    j["fn"] = r.fn;
    return j;
}

inline std::string metrics_table(const MetricsReport& r) {
    auto cell = [](const std::optional<double>& v) {
        char buf[32];
        if (v)
            std::snprintf(buf, sizeof buf, "%8.4f", *v);
        else
            std::snprintf(buf, sizeof buf, "%8s", "n/a");
        return std::string(buf);
    };
    char head[256], counts[256];
    std::snprintf(head, sizeof head, "  accuracy  precision   recall      auc\n  %8.4f   %s %s %s\n",
                  r.accuracy, cell(r.precision).c_str(), cell(r.recall).c_str(),
                  cell(r.auc).c_str());
    std::snprintf(counts, sizeof counts, "  tp=%zu fp=%zu tn=%zu fn=%zu (threshold %.2f)\n", r.tp,
                  r.fp, r.tn, r.fn, r.threshold);
    return std::string(head) + counts;
}

}  // namespace ade
