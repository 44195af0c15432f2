#pragma once

// AdamW, mini-batch training with early stopping on validation loss, and
// the evaluation helpers shared by training, scoring and comparison.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headprune/autodiff.hpp"
#include "headprune/data.hpp"
#include "headprune/errors.hpp"
#include "headprune/metrics.hpp"
#include "headprune/nn.hpp"
#include "headprune/rng.hpp"

namespace headprune {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 20;
  std::size_t patience = 10;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
    if (patience < 1 || patience > max_epochs) throw ConfigError("train.patience must be in [1, max_epochs]");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must be in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must be in (0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
  }

  static TrainConfig desk() { return {}; }

  static TrainConfig paper() {
    TrainConfig c;
    c.learning_rate = 2e-5;
    return c;
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// First and second moment estimates for one parameter.
struct MomentBuffers {
  std::vector<double> first;
  std::vector<double> second;
};

/// One AdamW update at 1-based `step`: bias-corrected moments, with weight
/// decay applied to the weights directly rather than through the gradient.
inline void adamw_update(std::span<double> weights, std::span<const double> grads, MomentBuffers& state,
                         std::uint64_t step, const TrainConfig& cfg) {
  if (state.first.empty()) {
    state.first.assign(weights.size(), 0.0);
    state.second.assign(weights.size(), 0.0);
  }
  if (grads.size() != weights.size() || state.first.size() != weights.size() || state.second.size() != weights.size()) {
    throw UsageError("adamw_update: buffer sizes disagree");
  }
  if (step < 1) throw UsageError("adamw_update: step is 1-based");
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double g = grads[i];
    state.first[i] = cfg.beta1 * state.first[i] + (1.0 - cfg.beta1) * g;
    state.second[i] = cfg.beta2 * state.second[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.first[i] / correction1;
    const double v_hat = state.second[i] / correction2;
    weights[i] *= decay;
    weights[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

class AdamW {
 public:
  explicit AdamW(TrainConfig cfg) : cfg_(std::move(cfg)) {}

  std::uint64_t steps() const { return step_; }

  /// Updates every trainable parameter from its accumulated gradient. All
  /// gradients are checked before any weight moves.
  void step(ParameterSet& params) {
    auto items = params.items();
    for (const auto& p : items) {
      for (double g : p.tensor.grad()) {
        if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + p.name);
      }
    }
    if (state_.size() != items.size()) state_.assign(items.size(), {});
    ++step_;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!items[i].trainable) continue;
      adamw_update(items[i].tensor.mutable_data(), items[i].tensor.grad(), state_[i], step_, cfg_);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<MomentBuffers> state_;
  std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Sigmoid outputs for each example, dropout off, no graph.
inline std::vector<double> predict(const Model& model, const std::vector<Example>& examples) {
  NoGradGuard no_grad;
  std::vector<double> probs;
  probs.reserve(examples.size());
  for (const auto& ex : examples) probs.push_back(model.forward(ex.input).prob());
  return probs;
}

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline LossAccuracy mean_loss(const Model& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw UsageError("mean_loss: no examples");
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const ModelOutput out = model.forward(ex.input);
    total += bce_loss(out.probability, ex.label).item();
    correct += (out.predicted_positive() ? 1 : 0) == ex.label ? 1 : 0;
  }
  const double n = static_cast<double>(examples.size());
  return {total / n, static_cast<double>(correct) / n};
}

inline EvalReport evaluate(const Model& model, const std::vector<Example>& examples, const std::string& task) {
  std::vector<int> predictions, gold;
  for (double p : predict(model, examples)) predictions.push_back(p >= 0.5 ? 1 : 0);
  for (const auto& ex : examples) gold.push_back(ex.label);
  return metrics(confusion(predictions, gold), task);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

/// Improvement means a decrease of more than this below the best loss so far.
inline constexpr double kImprovementTolerance = 1e-8;

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records one epoch's validation loss; true when it is a new best.
  bool observe(double val_loss) {
    if (val_loss < best_ - kImprovementTolerance) {
      best_ = val_loss;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct FitSummary {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Drives epochs: `run_epoch(epoch)` returns that epoch's record and
/// `on_best(epoch)` is called whenever validation loss improves, so the
/// caller can snapshot the model.
template <class RunEpoch, class OnBest>
FitSummary fit(std::size_t max_epochs, std::size_t patience, RunEpoch&& run_epoch, OnBest&& on_best) {
  FitSummary summary;
  EarlyStopping stopper(patience);
  for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
    EpochRecord record = run_epoch(epoch);
    record.epoch = epoch;
    if (!std::isfinite(record.train_loss) || !std::isfinite(record.val_loss)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
    }
    summary.history.push_back(record);
    if (stopper.observe(record.val_loss)) {
      summary.best_epoch = epoch;
      summary.best_val_loss = record.val_loss;
      on_best(epoch);
    }
    if (stopper.should_stop() && epoch < max_epochs) {
      summary.stopped_early = true;
      break;
    }
  }
  return summary;
}

struct TrainResult {
  Model model;  // weights from the best epoch
  FitSummary fit;
};

/// Mini-batch AdamW on binary cross-entropy. Batches are reshuffled every
/// epoch from the seed; the final partial batch is kept. Gradients are summed
/// in example order, so runs are bitwise reproducible.
inline TrainResult train(const Model& initial, const std::vector<Example>& train_set,
                         const std::vector<Example>& validation_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw UsageError("train: empty training split");
  if (validation_set.empty()) throw UsageError("train: empty validation split");

  Model model = initial;
  Model best = initial;
  AdamW optimizer(cfg);
  std::vector<std::size_t> order(train_set.size());

  auto run_epoch = [&](std::size_t epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng::derive(cfg.seed, epoch).shuffle(order);
    Rng dropout_rng = Rng::derive(cfg.seed, 0x10000 + epoch);
    ForwardOptions opts;
    opts.training = true;
    opts.rng = &dropout_rng;

    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      model.parameters().zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = train_set[order[i]];
        Tensor loss = bce_loss(model.forward(ex.input, opts).probability, ex.label);
        if (!std::isfinite(loss.item())) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
        total += loss.item();
        scale(loss, inv_batch).backward();
      }
      optimizer.step(model.parameters());
    }
    model.parameters().zero_grad();
    const LossAccuracy val = mean_loss(model, validation_set);
    return EpochRecord{epoch, total / static_cast<double>(train_set.size()), val.loss, val.accuracy};
  };

  FitSummary summary = fit(cfg.max_epochs, cfg.patience, run_epoch, [&](std::size_t) { best = model; });
  return {std::move(best), std::move(summary)};
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,val_accuracy\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy);
    out += buf;
  }
  return out;
}

}  // namespace headprune
