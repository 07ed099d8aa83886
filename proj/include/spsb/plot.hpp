// Static SVG loss curves over cumulative circuit evaluations.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spsb/train.hpp"

namespace spsb::plot {

struct Series {
  std::string label;
  std::vector<std::uint64_t> x;
  std::vector<double> y;        // smoothed
  std::vector<double> raw_y;    // unsmoothed, same grid
  std::vector<double> accuracy; // smoothed, same grid
};

struct PlotOptions {
  std::optional<std::size_t> window;  // overrides the per-method default
  bool show_raw = true;               // faint unsmoothed overlay
  bool accuracy_panel = false;
};

// One series per (method, task, lr): median over seeds, then smoothed.
std::vector<Series> build_series(std::span<const tasks::RunHistory> histories,
                                 const PlotOptions& options);

std::string render_svg(std::span<const Series> series, const PlotOptions& options);

// Reads every CSV, groups runs and writes one SVG. DataError on empty input.
void emit_plot(std::span<const std::filesystem::path> csvs, const std::filesystem::path& svg,
               const PlotOptions& options = {});

}  // namespace spsb::plot
