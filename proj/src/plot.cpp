#include "spsb/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "spsb/aggregate.hpp"
#include "spsb/error.hpp"

namespace spsb::plot {

std::vector<Series> build_series(std::span<const tasks::RunHistory> histories,
                                 const PlotOptions& options) {
  // Group by everything but the seed, keeping first-appearance order.
  std::vector<std::string> keys;
  std::vector<std::vector<tasks::RunHistory>> groups;
  for (const auto& h : histories) {
    const std::string key = diff::to_string(h.config.differentiator) + " " +
                            tasks::to_string(h.config.task) + " lr=" +
                            tasks::format_double(h.config.learning_rate);
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      groups.emplace_back();
      it = keys.end() - 1;
    }
    groups[static_cast<std::size_t>(it - keys.begin())].push_back(h);
  }
  std::vector<Series> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto method = groups[g].front().config.differentiator;
    const std::size_t window = options.window.value_or(tasks::default_window(method));
    const auto summary = tasks::aggregate_runs(groups[g], window);
    out.push_back(Series{keys[g], summary.circuit_evals, summary.smoothed_loss,
                         summary.median_loss, summary.smoothed_accuracy});
  }
  return out;
}

namespace {

constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Panel {
  double left, top, width, height;
  double x_max, y_max;
  double sx(double x) const { return left + width * (x_max > 0 ? x / x_max : 0.0); }
  double sy(double y) const { return top + height * (1.0 - (y_max > 0 ? y / y_max : 0.0)); }
};

void draw_axes(std::ostringstream& svg, const Panel& p, const std::string& y_label) {
  svg << "<rect x=\"" << px(p.left) << "\" y=\"" << px(p.top) << "\" width=\"" << px(p.width)
      << "\" height=\"" << px(p.height) << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = p.x_max * t / 4.0;
    const double yv = p.y_max * t / 4.0;
    svg << "<text x=\"" << px(p.sx(xv)) << "\" y=\"" << px(p.top + p.height + 16)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << std::llround(xv) << "</text>\n";
    svg << "<text x=\"" << px(p.left - 6) << "\" y=\"" << px(p.sy(yv) + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">" << px(yv) << "</text>\n";
  }
  svg << "<text x=\"" << px(p.left + p.width / 2) << "\" y=\"" << px(p.top + p.height + 34)
      << "\" font-size=\"12\" text-anchor=\"middle\">circuit evaluations</text>\n";
  svg << "<text x=\"" << px(p.left - 48) << "\" y=\"" << px(p.top + p.height / 2)
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 " << px(p.left - 48)
      << " " << px(p.top + p.height / 2) << ")\">" << y_label << "</text>\n";
}

void polyline(std::ostringstream& svg, const Panel& p, const std::vector<std::uint64_t>& x,
              const std::vector<double>& y, const std::string& cls, const char* colour,
              double opacity, const std::string& label) {
  std::string screen;
  std::string data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) {
      screen += ' ';
      data += ' ';
    }
    screen += px(p.sx(static_cast<double>(x[i]))) + "," + px(p.sy(y[i]));
    data += std::to_string(x[i]) + "," + num(y[i]);
  }
  svg << "<polyline class=\"" << cls << "\" data-label=\"" << label << "\" fill=\"none\" stroke=\""
      << colour << "\" stroke-width=\"1.5\" stroke-opacity=\"" << opacity << "\" points=\""
      << screen << "\" data-points=\"" << data << "\"/>\n";
}

}  // namespace

std::string render_svg(std::span<const Series> series, const PlotOptions& options) {
  double x_max = 0.0;
  double y_max = 0.0;
  for (const auto& s : series) {
    for (auto x : s.x) x_max = std::max(x_max, static_cast<double>(x));
    for (double y : s.y) y_max = std::max(y_max, y);
    if (options.show_raw) {
      for (double y : s.raw_y) y_max = std::max(y_max, y);
    }
  }
  y_max = y_max > 0 ? y_max * 1.05 : 1.0;

  const double width = 760;
  const double legend_h = 18.0 * static_cast<double>(series.size()) + 12;
  const double panel_h = 300;
  const double height = 40 + panel_h + 50 + (options.accuracy_panel ? panel_h + 50 : 0) + legend_h;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << px(height) << "\" viewBox=\"0 0 " << width << " " << px(height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";

  const Panel loss{80, 30, 640, panel_h, x_max, y_max};
  draw_axes(svg, loss, "loss");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = kPalette[i % std::size(kPalette)];
    if (options.show_raw) polyline(svg, loss, series[i].x, series[i].raw_y, "raw", colour, 0.3, series[i].label);
    polyline(svg, loss, series[i].x, series[i].y, "series", colour, 1.0, series[i].label);
  }

  double legend_top = loss.top + panel_h + 50;
  if (options.accuracy_panel) {
    const Panel acc{80, legend_top, 640, panel_h, x_max, 1.0};
    draw_axes(svg, acc, "accuracy");
    for (std::size_t i = 0; i < series.size(); ++i) {
      polyline(svg, acc, series[i].x, series[i].accuracy, "accuracy",
               kPalette[i % std::size(kPalette)], 1.0, series[i].label);
    }
    legend_top += panel_h + 50;
  }

  svg << "<g class=\"legend\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = legend_top + 18.0 * static_cast<double>(i);
    svg << "<line x1=\"90\" x2=\"120\" y1=\"" << px(y) << "\" y2=\"" << px(y) << "\" stroke=\""
        << kPalette[i % std::size(kPalette)] << "\" stroke-width=\"2\"/>"
        << "<text class=\"legend-entry\" x=\"128\" y=\"" << px(y + 4) << "\" font-size=\"12\">"
        << series[i].label << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

void emit_plot(std::span<const std::filesystem::path> csvs, const std::filesystem::path& svg,
               const PlotOptions& options) {
  if (csvs.empty()) throw DataError("plot: no CSV files given");
  std::vector<tasks::RunHistory> histories;
  for (const auto& path : csvs) {
    auto h = tasks::read_history_csv(path);
    histories.insert(histories.end(), h.begin(), h.end());
  }
  const auto series = build_series(histories, options);
  std::ofstream out(svg, std::ios::binary);
  if (!out) throw DataError("cannot write " + svg.string());
  out << render_svg(series, options);
}

}  // namespace spsb::plot
