#pragma once

#include <cstdint>
#include <span>

namespace tard {

// Fraction of positions where labels and truth agree.
double accuracy(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> truth);

// Harmonic mean of precision and recall, positive class = fault (1).
// Returns 0 when precision + recall is 0.
double f1_score(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> truth);

// Area under the ROC curve via the rank statistic with average-rank tie
// handling (equals the trapezoidal ROC area). Throws UsageError when truth
// has a single class.
double auc(std::span<const double> scores, std::span<const std::uint8_t> truth);

// Fraction of healthy samples labeled faulty; 0 when there are no healthy samples.
double false_alarm_rate(std::span<const std::uint8_t> labels,
                        std::span<const std::uint8_t> truth);

}  // namespace tard
