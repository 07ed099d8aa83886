#include "spsb/aggregate.hpp"

#include <algorithm>
#include <optional>

#include "spsb/error.hpp"

namespace spsb::tasks {

double median(std::vector<double> values) {
  if (values.empty()) throw InvariantError("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<double> rolling_mean(std::span<const double> series, std::size_t window) {
  if (window < 1) throw InvariantError("rolling window must be at least 1");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t k = lo; k <= i; ++k) s += series[k];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

std::size_t default_window(diff::Method method) {
  return method == diff::Method::Spsb ? 10 : 3;
}

RunSummary aggregate_runs(std::span<const RunHistory> histories, std::size_t window) {
  if (histories.empty()) throw UsageError("aggregate_runs needs at least one history");
  auto without_seed = [](const RunHistory& h) {
    auto kv = to_key_values(h.config);
    kv.erase("seed");
    return kv;
  };
  const auto reference = without_seed(histories.front());
  for (const auto& h : histories) {
    if (without_seed(h) != reference) {
      throw UsageError("aggregate_runs: histories differ in more than their seed");
    }
  }

  RunSummary s;
  s.window = window;
  s.runs = histories.size();
  for (const auto& h : histories) {
    for (const auto& r : h.records) s.circuit_evals.push_back(r.circuit_evals);
  }
  std::sort(s.circuit_evals.begin(), s.circuit_evals.end());
  s.circuit_evals.erase(std::unique(s.circuit_evals.begin(), s.circuit_evals.end()),
                        s.circuit_evals.end());

  for (std::uint64_t g : s.circuit_evals) {
    std::vector<double> losses;
    std::vector<double> accs;
    for (const auto& h : histories) {
      const auto it = std::upper_bound(
          h.records.begin(), h.records.end(), g,
          [](std::uint64_t v, const StepRecord& r) { return v < r.circuit_evals; });
      if (it == h.records.begin()) continue;
      losses.push_back(std::prev(it)->loss);
      accs.push_back(std::prev(it)->accuracy);
    }
    s.median_loss.push_back(median(std::move(losses)));
    s.median_accuracy.push_back(median(std::move(accs)));
  }
  s.smoothed_loss = rolling_mean(s.median_loss, window);
  s.smoothed_accuracy = rolling_mean(s.median_accuracy, window);
  return s;
}

std::optional<std::uint64_t> first_evals_reaching(const RunSummary& summary,
                                                  std::span<const double> series, double target) {
  for (std::size_t i = 0; i < series.size() && i < summary.circuit_evals.size(); ++i) {
    if (series[i] <= target) return summary.circuit_evals[i];
  }
  return std::nullopt;
}

}  // namespace spsb::tasks
