#pragma once

// Gradient-based head importance and zero-score pruning.
//
// For head h with output tensor H (the gated per-head context, before the
// output projection), the score is the average over examples of the mean
// absolute value of dL/dH over the head's non-padded positions:
//
//   I_h = E_(x,y)~D  mean_{t real, j} | dL/dH[t, j] |
//
// Heads scoring at or below a threshold are switched off in the HeadMask.
// Weights are never modified and nothing is retrained.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "headprune/checkpoint.hpp"
#include "headprune/data.hpp"
#include "headprune/errors.hpp"
#include "headprune/metrics.hpp"
#include "headprune/nn.hpp"
#include "headprune/serialize.hpp"
#include "headprune/training.hpp"

namespace headprune {

/// How gradient magnitudes are folded within one example's head tensor.
enum class Reduction { kMean, kSum };

inline Reduction parse_reduction(const std::string& s) {
  if (s == "mean") return Reduction::kMean;
  if (s == "sum") return Reduction::kSum;
  throw UsageError("unknown reduction '" + s + "' (expected mean or sum)");
}

struct ImportanceGrid {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::vector<double> scores;  // row-major [layer][head]
  std::size_t n_examples = 0;
  std::string task;
  std::string source_split;

  ImportanceGrid() = default;
  ImportanceGrid(std::size_t l, std::size_t h) : layers(l), heads(h), scores(l * h, 0.0) {}

  double at(std::size_t l, std::size_t h) const { return scores.at(l * heads + h); }
  double& at(std::size_t l, std::size_t h) { return scores.at(l * heads + h); }
};

struct ScoreOptions {
  Reduction reduction = Reduction::kMean;
  std::string source_split = "train";
};

/// Scores every head over `examples`. Works on a private copy of the model,
/// so neither weights nor accumulated gradients of `model` change.
inline ImportanceGrid score_heads(const Model& model, const std::vector<Example>& examples, const TaskSpec& task,
                                  const ScoreOptions& options = {}) {
  if (examples.empty()) throw UsageError("score_heads: empty dataset");
  const ModelConfig& cfg = model.config();
  Model scratch = model;
  ImportanceGrid grid(cfg.n_layers, cfg.n_heads);
  grid.task = task.name();
  grid.source_split = options.source_split;
  const std::size_t dh = cfg.head_dim();

  for (const Example& ex : examples) {
    scratch.parameters().zero_grad();
    ModelOutput out = scratch.forward(ex.input);
    for (auto& layer : out.head_outputs)
      for (auto& head : layer) head.retain_grad();
    bce_loss(out.probability, ex.label).backward();

    std::size_t real = 0;
    for (auto r : out.real) real += r ? 1 : 0;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const auto g = out.head_outputs[l][h].grad();
        double total = 0.0;
        for (std::size_t t = 0; t < out.real.size(); ++t) {
          if (!out.real[t]) continue;
          for (std::size_t j = 0; j < dh; ++j) total += std::abs(g[t * dh + j]);
        }
        if (!std::isfinite(total)) {
          throw ScoringError("non-finite gradient for head (" + std::to_string(l) + "," + std::to_string(h) +
                             ") on example " + ex.id);
        }
        grid.at(l, h) += options.reduction == Reduction::kMean ? total / static_cast<double>(real * dh) : total;
      }
    }
  }
  for (auto& s : grid.scores) s /= static_cast<double>(examples.size());
  grid.n_examples = examples.size();
  return grid;
}

// ---------------------------------------------------------------------------
// Grid CSV: header `layer,head,score`, layers then heads ascending.
// ---------------------------------------------------------------------------

inline std::string grid_csv(const ImportanceGrid& grid) {
  std::string out = "layer,head,score\n";
  char buf[96];
  for (std::size_t l = 0; l < grid.layers; ++l) {
    for (std::size_t h = 0; h < grid.heads; ++h) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", l, h, grid.at(l, h));
      out += buf;
    }
  }
  return out;
}

inline ImportanceGrid parse_grid_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || (line != "layer,head,score" && line != "layer,head,score\r")) {
    throw DataError("importance CSV must start with header layer,head,score");
  }
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>> rows;
  std::size_t max_l = 0, max_h = 0, row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t l = 0, h = 0;
    double s = 0.0;
    int consumed = 0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf%n", &l, &h, &s, &consumed) != 3 ||
        static_cast<std::size_t>(consumed) != line.size()) {
      throw DataError("importance CSV row " + std::to_string(row) + " is malformed: " + line);
    }
    if (!(s >= 0.0) || !std::isfinite(s)) throw DataError("importance CSV row " + std::to_string(row) + ": score must be finite and >= 0");
    max_l = std::max(max_l, l);
    max_h = std::max(max_h, h);
    rows.push_back({{l, h}, s});
  }
  if (rows.empty()) throw DataError("importance CSV has no rows");
  ImportanceGrid grid(max_l + 1, max_h + 1);
  if (rows.size() != grid.scores.size()) throw DataError("importance CSV does not cover a full layer x head grid");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto [lh, s] = rows[i];
    if (lh.first * grid.heads + lh.second != i) throw DataError("importance CSV rows out of order at row " + std::to_string(i + 2));
    grid.at(lh.first, lh.second) = s;
  }
  return grid;
}

inline void write_grid_csv(const ImportanceGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << grid_csv(grid);
  if (!out) throw IoError("failed writing " + path);
}

inline ImportanceGrid load_grid_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return parse_grid_csv(in);
}

// ---------------------------------------------------------------------------
// Pruning
// ---------------------------------------------------------------------------

struct PruneReport {
  double threshold = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pruned_heads;  // sorted (layer, head)
  std::size_t retained_count = 0;
  std::size_t total_count = 0;
};

inline Json to_json(const PruneReport& r) {
  Json heads = Json::array();
  for (const auto& [l, h] : r.pruned_heads) heads.push_back({{"layer", l}, {"head", h}});
  return {{"threshold", r.threshold},
          {"pruned_heads", heads},
          {"pruned_count", r.pruned_heads.size()},
          {"retained_count", r.retained_count},
          {"total_count", r.total_count}};
}

inline PruneReport prune_report_from_json(const Json& j) {
  PruneReport r;
  try {
    r.threshold = j.at("threshold").get<double>();
    for (const auto& e : j.at("pruned_heads")) r.pruned_heads.emplace_back(e.at("layer").get<std::size_t>(), e.at("head").get<std::size_t>());
    r.retained_count = j.at("retained_count").get<std::size_t>();
    r.total_count = j.at("total_count").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed prune report: ") + e.what());
  }
  return r;
}

/// Switches off every head whose score is <= threshold (heads already off
/// stay off). Only the HeadMask changes.
inline PruneReport prune_mask(HeadMask& mask, const ImportanceGrid& grid, double threshold) {
  if (!(threshold >= 0.0)) throw UsageError("prune threshold must be >= 0");
  if (grid.layers != mask.layers() || grid.heads != mask.heads()) {
    throw UsageError("importance grid " + std::to_string(grid.layers) + "x" + std::to_string(grid.heads) +
                     " does not match model " + std::to_string(mask.layers()) + "x" + std::to_string(mask.heads()));
  }
  PruneReport report;
  report.threshold = threshold;
  report.total_count = mask.total();
  for (std::size_t l = 0; l < mask.layers(); ++l) {
    for (std::size_t h = 0; h < mask.heads(); ++h) {
      if (grid.at(l, h) <= threshold) mask.set(l, h, false);
      if (!mask.active(l, h)) report.pruned_heads.emplace_back(l, h);
    }
  }
  report.retained_count = mask.active_count();
  return report;
}

struct PruneResult {
  Model model;
  PruneReport report;
};

inline PruneResult prune(const Model& model, const ImportanceGrid& grid, double threshold) {
  HeadMask mask = model.head_mask();
  PruneReport report = prune_mask(mask, grid, threshold);
  Model pruned = model;
  pruned.set_head_mask(mask);
  return {std::move(pruned), std::move(report)};
}

// ---------------------------------------------------------------------------
// Original vs pruned comparison
// ---------------------------------------------------------------------------

struct Comparison {
  EvalReport original;
  EvalReport pruned;
  std::size_t original_heads = 0;
  std::size_t pruned_heads = 0;  // active heads in the pruned model

  double delta(double EvalReport::*field) const { return pruned.*field - original.*field; }
};

/// Evaluates both models on the same example sequence.
inline Comparison compare(const Checkpoint& original, const Checkpoint& pruned, const std::vector<Example>& examples,
                          const TaskSpec& task) {
  if (original.vocabulary.fingerprint() != pruned.vocabulary.fingerprint()) {
    throw UsageError("checkpoints use different vocabularies (fingerprint " + hex64(original.vocabulary.fingerprint()) +
                     " vs " + hex64(pruned.vocabulary.fingerprint()) + ")");
  }
  if (!(original.task == task) || !(pruned.task == task)) {
    throw UsageError("checkpoints were trained for task " + original.task.name() + "/" + pruned.task.name() +
                     ", comparison requested for " + task.name());
  }
  Comparison c;
  c.original = evaluate(original.model, examples, task.name());
  c.pruned = evaluate(pruned.model, examples, task.name());
  c.original_heads = original.model.head_mask().active_count();
  c.pruned_heads = pruned.model.head_mask().active_count();
  return c;
}

inline Json to_json(const Comparison& c) {
  Json delta = Json::object();
  delta["precision"] = c.delta(&EvalReport::precision);
  delta["recall"] = c.delta(&EvalReport::recall);
  delta["f1"] = c.delta(&EvalReport::f1);
  delta["accuracy"] = c.delta(&EvalReport::accuracy);
  delta["macro_precision"] = c.delta(&EvalReport::macro_precision);
  delta["macro_recall"] = c.delta(&EvalReport::macro_recall);
  delta["weighted_precision"] = c.delta(&EvalReport::weighted_precision);
  delta["weighted_recall"] = c.delta(&EvalReport::weighted_recall);
  return {{"original", to_json(c.original)},
          {"pruned", to_json(c.pruned)},
          {"delta", delta},
          {"original_active_heads", c.original_heads},
          {"pruned_active_heads", c.pruned_heads}};
}

}  // namespace headprune
