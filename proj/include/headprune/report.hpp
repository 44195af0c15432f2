#pragma once

// Importance heatmaps (standalone SVG 1.1) and the Markdown run summary.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "headprune/errors.hpp"
#include "headprune/metrics.hpp"
#include "headprune/pruning.hpp"
#include "headprune/serialize.hpp"
#include "headprune/training.hpp"

namespace headprune {

enum class ColorScale { kLinear, kLog };

inline ColorScale parse_color_scale(const std::string& s) {
  if (s == "linear") return ColorScale::kLinear;
  if (s == "log") return ColorScale::kLog;
  throw UsageError("unknown color scale '" + s + "' (expected linear or log)");
}

struct HeatmapSpec {
  ImportanceGrid grid;
  bool annotate = true;
  ColorScale color_scale = ColorScale::kLinear;
  std::string title = "Attention head importance";
  std::optional<double> log_floor;  // substituted for non-positive scores on the log scale
};

struct Rgb {
  int r, g, b;
};

/// Light-to-dark single-hue ramp; t in [0,1].
inline Rgb ramp_color(double t) {
  constexpr Rgb lo{247, 251, 255};
  constexpr Rgb hi{8, 48, 107};
  t = std::clamp(t, 0.0, 1.0);
  auto mix = [t](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  return {mix(lo.r, hi.r), mix(lo.g, hi.g), mix(lo.b, hi.b)};
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(const char* pattern, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

}  // namespace detail

/// Position of each score on the color ramp, in [0,1]. A constant grid maps
/// to the middle of the ramp.
inline std::vector<double> ramp_positions(const HeatmapSpec& spec) {
  const auto& scores = spec.grid.scores;
  std::vector<double> values(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double v = scores[i];
    if (spec.color_scale == ColorScale::kLog) {
      if (v <= 0.0) {
        if (!spec.log_floor || !(*spec.log_floor > 0.0)) {
          throw ConfigError("log color scale needs positive scores or a positive log floor");
        }
        v = *spec.log_floor;
      }
      v = std::log10(std::max(v, spec.log_floor.value_or(v)));
    }
    values[i] = v;
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  for (auto& v : values) v = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  return values;
}

inline std::string render_heatmap_svg(const HeatmapSpec& spec) {
  const ImportanceGrid& grid = spec.grid;
  if (grid.layers == 0 || grid.heads == 0 || grid.scores.size() != grid.layers * grid.heads) {
    throw UsageError("heatmap: empty or inconsistent grid");
  }
  constexpr int kCellW = 48, kCellH = 28, kLeft = 56, kTop = 64, kRight = 16, kBottom = 16;
  const int width = kLeft + static_cast<int>(grid.heads) * kCellW + kRight;
  const int height = kTop + static_cast<int>(grid.layers) * kCellH + kBottom;
  const std::vector<double> t = ramp_positions(spec);

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += detail::fmt(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n",
      width, height, width, height);
  svg += detail::fmt("<rect x=\"0\" y=\"0\" width=\"%d\" height=\"%d\" fill=\"#ffffff\"/>\n", width, height);
  svg += "<text x=\"" + std::to_string(width / 2) +
         "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         detail::xml_escape(spec.title) + "</text>\n";
  for (std::size_t h = 0; h < grid.heads; ++h) {
    svg += detail::fmt(
        "<text class=\"col-label\" x=\"%d\" y=\"%d\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"11\">H%zu</text>\n",
        kLeft + static_cast<int>(h) * kCellW + kCellW / 2, kTop - 8, h);
  }
  for (std::size_t l = 0; l < grid.layers; ++l) {
    const int y = kTop + static_cast<int>(l) * kCellH;
    svg += detail::fmt(
        "<text class=\"row-label\" x=\"%d\" y=\"%d\" text-anchor=\"end\" font-family=\"sans-serif\" "
        "font-size=\"11\">L%zu</text>\n",
        kLeft - 8, y + kCellH / 2 + 4, l);
    for (std::size_t h = 0; h < grid.heads; ++h) {
      const int x = kLeft + static_cast<int>(h) * kCellW;
      const double pos = t[l * grid.heads + h];
      const Rgb c = ramp_color(pos);
      svg += detail::fmt(
          "<rect class=\"cell\" data-layer=\"%zu\" data-head=\"%zu\" x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
          "fill=\"#%02x%02x%02x\" stroke=\"#ffffff\" stroke-width=\"1\"/>\n",
          l, h, x, y, kCellW, kCellH, c.r, c.g, c.b);
      if (spec.annotate) {
        svg += detail::fmt(
            "<text class=\"value\" x=\"%d\" y=\"%d\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            "font-size=\"10\" fill=\"%s\">%s</text>\n",
            x + kCellW / 2, y + kCellH / 2 + 4, pos > 0.5 ? "#ffffff" : "#000000",
            format_2dp(grid.at(l, h)).c_str());
      }
    }
  }
  svg += "</svg>\n";
  return svg;
}

inline void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

inline void render_heatmap(const HeatmapSpec& spec, const std::string& path) {
  write_text_file(render_heatmap_svg(spec), path);
}

// ---------------------------------------------------------------------------
// Run summary
// ---------------------------------------------------------------------------

struct RunSummaryInput {
  Json config;
  std::vector<EpochRecord> history;
  std::vector<std::pair<std::string, ImportanceGrid>> grids;
  std::optional<PruneReport> prune_report;
  std::optional<Comparison> comparison;
};

inline std::string write_run_summary(const RunSummaryInput& in) {
  std::string md = "# Head pruning run summary\n\n";

  md += "## Configuration\n\n```json\n" + (in.config.is_null() ? std::string("{}") : in.config.dump(2)) + "\n```\n\n";

  md += "## Training curve\n\n";
  if (in.history.empty()) {
    md += "No training history.\n\n";
  } else {
    md += "| Epoch | Train loss | Validation loss | Validation accuracy |\n|---:|---:|---:|---:|\n";
    for (const auto& r : in.history) {
      md += detail::fmt("| %zu | %.6f | %.6f | %.4f |\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy);
    }
    const auto best = std::min_element(in.history.begin(), in.history.end(),
                                       [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
    md += detail::fmt("\nBest epoch: %zu (validation loss %.6f)\n\n", best->epoch, best->val_loss);
  }

  md += "## Head importance\n\n";
  if (in.grids.empty()) md += "No importance grids.\n\n";
  for (const auto& [name, grid] : in.grids) {
    const auto [lo, hi] = std::minmax_element(grid.scores.begin(), grid.scores.end());
    std::size_t zeros = 0;
    double total = 0.0;
    for (double s : grid.scores) {
      zeros += s == 0.0 ? 1 : 0;
      total += s;
    }
    md += "### " + name + "\n\n";
    md += detail::fmt("%zu layers x %zu heads, %zu examples, split %s\n\n", grid.layers, grid.heads, grid.n_examples,
                      grid.source_split.empty() ? "-" : grid.source_split.c_str());
    md += detail::fmt("min %.6g, max %.6g, mean %.6g, zero scores %zu\n\n", grid.scores.empty() ? 0.0 : *lo,
                      grid.scores.empty() ? 0.0 : *hi, total / static_cast<double>(std::max<std::size_t>(1, grid.scores.size())),
                      zeros);
  }

  md += "## Pruning\n\n";
  if (in.prune_report) {
    const PruneReport& r = *in.prune_report;
    md += detail::fmt("%zu heads pruned at threshold %.6g; %zu of %zu heads retained.\n\n", r.pruned_heads.size(),
                      r.threshold, r.retained_count, r.total_count);
    if (!r.pruned_heads.empty()) {
      md += "Pruned heads:";
      for (const auto& [l, h] : r.pruned_heads) md += detail::fmt(" L%zu-H%zu", l, h);
      md += "\n\n";
    }
  } else {
    md += "No pruning performed.\n\n";
  }

  md += "## Original vs pruned\n\n";
  if (in.comparison) {
    const Comparison& c = *in.comparison;
    md += detail::fmt("Evaluated on %zu examples (task %s).\n\n", c.original.n, c.original.task.c_str());
    md += "| Metric | Original Model | Pruned Model | Delta |\n|---|---:|---:|---:|\n";
    for (const auto& row : kMetricRows) {
      md += std::string("| ") + row.label + " | " + format_2dp(c.original.*row.field) + " | " +
            format_2dp(c.pruned.*row.field) + " | " + format_signed_2dp(c.delta(row.field)) + " |\n";
    }
    md += "\n";
  } else {
    md += "No comparison available.\n";
  }
  return md;
}

}  // namespace headprune
