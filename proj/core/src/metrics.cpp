#include "tard/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "tard/errors.hpp"

namespace tard {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) {
        throw ConfigError("metrics: length mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
    }
    if (a == 0) {
        throw ConfigError("metrics: empty inputs");
    }
}

}  // namespace

double accuracy(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> truth) {
    check_lengths(labels.size(), truth.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if ((labels[i] != 0) == (truth[i] != 0)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double f1_score(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> truth) {
    check_lengths(labels.size(), truth.size());
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool l = labels[i] != 0;
        const bool t = truth[i] != 0;
        if (l && t) ++tp;
        else if (l && !t) ++fp;
        else if (!l && t) ++fn;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(tp) / denom;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
    check_lengths(scores.size(), truth.size());
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (auto t : truth) n_pos += (t != 0);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw UsageError("auc: truth contains a single class; AUC undefined");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // 1-based average ranks over tie groups.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) {
            if (truth[order[k]] != 0) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double false_alarm_rate(std::span<const std::uint8_t> labels,
                        std::span<const std::uint8_t> truth) {
    check_lengths(labels.size(), truth.size());
    std::size_t fp = 0, healthy = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (truth[i] == 0) {
            ++healthy;
            if (labels[i] != 0) ++fp;
        }
    }
    if (healthy == 0) return 0.0;
    return static_cast<double>(fp) / static_cast<double>(healthy);
}

}  // namespace tard
