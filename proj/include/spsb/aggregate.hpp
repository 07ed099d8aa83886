#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spsb/train.hpp"

namespace spsb::tasks {

// Median of a non-empty sample; mean of the middle pair for even sizes.
double median(std::vector<double> values);

// Trailing rolling mean; point i averages the last min(window, i + 1) values.
std::vector<double> rolling_mean(std::span<const double> series, std::size_t window);

// Default smoothing windows: 10 for spsb, 3 for the exact differentiators.
std::size_t default_window(diff::Method method);

struct RunSummary {
  std::vector<std::uint64_t> circuit_evals;  // grid: union of all recorded counts
  std::vector<double> median_loss;           // raw medians across runs
  std::vector<double> median_accuracy;
  std::vector<double> smoothed_loss;         // rolling mean of median_loss
  std::vector<double> smoothed_accuracy;
  std::size_t window = 1;
  std::size_t runs = 0;
};

// Medians across runs on the cumulative-evaluation axis. A run contributes
// its latest record at or before each grid point; runs with no record yet are
// left out of that point. Histories must share every config field except the
// seed (UsageError otherwise).
RunSummary aggregate_runs(std::span<const RunHistory> histories, std::size_t window);

// First grid point whose value is <= target, or nullopt.
std::optional<std::uint64_t> first_evals_reaching(const RunSummary& summary,
                                                  std::span<const double> series, double target);

}  // namespace spsb::tasks
