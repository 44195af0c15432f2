#pragma once

// Test-only oracles and fixtures. The finite-difference helpers only ever
// call forward code, never backward(), so they stay independent of the
// gradients they check.

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "headprune/headprune.hpp"

namespace headprune::testing {

/// Central differences (f(x+eps) - f(x-eps)) / 2eps for every entry of `values`.
template <class F>
std::vector<double> central_difference(std::span<double> values, F&& f, double eps = 1e-6) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = f();
    values[i] = saved - eps;
    const double down = f();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

/// Derivative of f along `direction` by central difference.
template <class F>
double directional_difference(std::span<double> values, std::span<const double> direction, F&& f,
                              double eps = 1e-6) {
  std::vector<double> saved(values.begin(), values.end());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = saved[i] + eps * direction[i];
  const double up = f();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = saved[i] - eps * direction[i];
  const double down = f();
  std::copy(saved.begin(), saved.end(), values.begin());
  return (up - down) / (2.0 * eps);
}

/// ||a - b|| / max(||a||, ||b||); 0 when both are exactly zero.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

inline ModelConfig tiny_config(std::size_t vocab, std::size_t layers, std::size_t heads, std::size_t d_model = 8,
                               std::size_t max_len = 12) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = d_model;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_ff = 2 * d_model;
  c.lstm_hidden = 4;
  c.lstm_layers = 2;
  c.max_len = max_len;
  return c;
}

/// Real tokens `ids` followed by padding up to `width`.
inline EncodedInput padded(const std::vector<int>& ids, std::size_t width) {
  EncodedInput in;
  in.ids = ids;
  in.mask.assign(ids.size(), 1);
  in.ids.resize(width, kPadId);
  in.mask.resize(width, 0);
  return in;
}

/// Random inputs: length in [1, width], ids in [0, vocab).
inline std::vector<Example> random_examples(std::size_t count, std::size_t vocab, std::size_t width, Rng& rng) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = 1 + rng.below(width);
    std::vector<int> ids(len);
    for (auto& id : ids) id = static_cast<int>(rng.below(vocab));
    out.push_back({"ex" + std::to_string(i), padded(ids, width), static_cast<int>(rng.below(2))});
  }
  return out;
}

inline double logit(const Model& m, const EncodedInput& in) {
  NoGradGuard guard;
  return m.forward(in).logit.item();
}

inline double batch_loss(const Model& m, const std::vector<Example>& batch) {
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& ex : batch) total += bce_loss(m.forward(ex.input).probability, ex.label).item();
  return total / static_cast<double>(batch.size());
}

/// Zeroes the output-projection rows that read head `head` of `layer`.
inline void disconnect_head(Model& m, std::size_t layer, std::size_t head) {
  const std::size_t d = m.config().d_model, dh = m.config().head_dim();
  auto w = m.parameters().at("encoder." + std::to_string(layer) + ".attn.out.weight").mutable_data();
  for (std::size_t r = head * dh; r < (head + 1) * dh; ++r)
    for (std::size_t c = 0; c < d; ++c) w[r * d + c] = 0.0;
}

/// Mean |dL/dH| for one head by perturbing each real element of its output
/// through a forward hook.
inline double fd_head_importance(const Model& m, const Example& ex, std::size_t layer, std::size_t head,
                                 double eps = 1e-6) {
  NoGradGuard guard;
  const ModelOutput base = m.forward(ex.input);
  const Tensor& h = base.head_outputs[layer][head];
  const std::size_t dh = h.dim(1);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < base.real.size(); ++t) {
    if (!base.real[t]) continue;
    for (std::size_t j = 0; j < dh; ++j) {
      auto loss_with = [&](double delta) {
        ForwardOptions opts;
        opts.hook = [&](std::size_t l, std::size_t hh, const Tensor& out) {
          if (l != layer || hh != head) return out;
          std::vector<double> v(out.data().begin(), out.data().end());
          v[t * dh + j] += delta;
          return Tensor(out.shape(), std::move(v));
        };
        return bce_loss(m.forward(ex.input, opts).probability, ex.label).item();
      };
      total += std::abs((loss_with(eps) - loss_with(-eps)) / (2.0 * eps));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace headprune::testing
