#pragma once

// Transformer encoder + bidirectional LSTM + sigmoid classifier.
//
// Each attention head's context tensor is computed separately and exposed
// (after its HeadMask gate) before the output projection merges heads, so
// the pruning code can read gradients at exactly that point.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "headprune/autodiff.hpp"
#include "headprune/errors.hpp"
#include "headprune/rng.hpp"

namespace headprune {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t lstm_hidden = 32;
  std::size_t lstm_layers = 2;
  std::size_t max_len = 128;
  double dropout_rate = 0.0;

  std::size_t head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (vocab_size < 1) throw ConfigError("model.vocab_size must be >= 1");
    if (n_layers < 1) throw ConfigError("model.n_layers must be >= 1");
    if (n_heads < 1) throw ConfigError("model.n_heads must be >= 1");
    if (lstm_layers < 1) throw ConfigError("model.lstm_layers must be >= 1");
    if (max_len < 1) throw ConfigError("model.max_len must be >= 1");
    if (d_model < 1 || d_ff < 1 || lstm_hidden < 1) throw ConfigError("model widths must be >= 1");
    if (d_model % n_heads != 0) {
      throw ConfigError("model.d_model (" + std::to_string(d_model) + ") not divisible by model.n_heads (" +
                        std::to_string(n_heads) + ")");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("model.dropout_rate must be in [0,1)");
  }

  /// Small encoder that trains in seconds on one core.
  static ModelConfig desk(std::size_t vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    return c;
  }

  /// Full-size shape: 12x12 heads over 768 dims, 128-unit BiLSTM.
  static ModelConfig paper(std::size_t vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.d_model = 768;
    c.n_layers = 12;
    c.n_heads = 12;
    c.d_ff = 3072;
    c.lstm_hidden = 128;
    c.lstm_layers = 2;
    c.max_len = 128;
    c.dropout_rate = 0.1;
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One {0,1} gate per attention head, row-major by layer.
class HeadMask {
 public:
  HeadMask() = default;
  HeadMask(std::size_t layers, std::size_t heads) : layers_(layers), heads_(heads), gates_(layers * heads, 1) {}

  std::size_t layers() const { return layers_; }
  std::size_t heads() const { return heads_; }
  std::size_t total() const { return gates_.size(); }

  bool active(std::size_t layer, std::size_t head) const { return gates_.at(index(layer, head)) != 0; }
  void set(std::size_t layer, std::size_t head, bool on) { gates_.at(index(layer, head)) = on ? 1 : 0; }

  std::size_t active_count() const {
    std::size_t n = 0;
    for (auto g : gates_) n += g;
    return n;
  }

  std::span<const std::uint8_t> gates() const { return gates_; }

  friend bool operator==(const HeadMask&, const HeadMask&) = default;

 private:
  std::size_t index(std::size_t layer, std::size_t head) const {
    if (layer >= layers_ || head >= heads_) {
      throw UsageError("head (" + std::to_string(layer) + "," + std::to_string(head) + ") outside " +
                       std::to_string(layers_) + "x" + std::to_string(heads_) + " mask");
    }
    return layer * heads_ + head;
  }

  std::size_t layers_ = 0;
  std::size_t heads_ = 0;
  std::vector<std::uint8_t> gates_;
};

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Named parameters in creation order.
class ParameterSet {
 public:
  Tensor add(std::string name, Tensor tensor) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    index_.emplace(name, items_.size());
    items_.push_back({std::move(name), tensor, true});
    return tensor;
  }

  std::span<Parameter> items() { return items_; }
  std::span<const Parameter> items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("no parameter named " + name);
    return items_[it->second].tensor;
  }
  const Tensor& at(const std::string& name) const { return const_cast<ParameterSet*>(this)->at(name); }

  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.size();
    return n;
  }

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

/// Token ids of one example padded to a fixed width; mask is 1 for real tokens.
struct EncodedInput {
  std::vector<int> ids;
  std::vector<unsigned char> mask;

  std::size_t real_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    return n;
  }
};

/// Replaces a head's (gated) output; used by perturbation oracles.
using HeadHook = std::function<Tensor(std::size_t layer, std::size_t head, const Tensor& head_output)>;

struct ForwardOptions {
  bool training = false;  // enables dropout
  Rng* rng = nullptr;     // required when training with dropout > 0
  bool keep_attention = false;
  HeadHook hook;
};

struct EncoderOutput {
  Tensor hidden;                                // [length, d_model]
  std::vector<std::vector<Tensor>> head_outputs;  // [layer][head] -> [length, head_dim]
  std::vector<std::vector<Tensor>> attention;     // [layer][head] -> [length, length], if kept
  std::size_t length = 0;                       // positions actually computed
  std::vector<unsigned char> real;              // mask over those positions
};

struct ModelOutput {
  Tensor logit;        // [1,1]
  Tensor probability;  // [1,1]
  std::vector<std::vector<Tensor>> head_outputs;
  std::vector<std::vector<Tensor>> attention;
  std::vector<unsigned char> real;

  double prob() const { return probability.item(); }
  /// Probability exactly 0.5 counts as positive.
  bool predicted_positive() const { return prob() >= 0.5; }
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed) : Model(config, std::optional<Rng>(Rng(seed))) {}

  Model(const Model& other) : Model(other.config_, std::optional<Rng>()) {
    auto dst = params_.items();
    auto src = other.params_.items();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), dst[i].tensor.mutable_data().begin());
      dst[i].trainable = src[i].trainable;
    }
    mask_ = other.mask_;
  }
  Model& operator=(const Model& other) {
    if (this != &other) {
      Model copy(other);
      *this = std::move(copy);
    }
    return *this;
  }
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  const HeadMask& head_mask() const { return mask_; }
  void set_head_mask(const HeadMask& mask) {
    if (mask.layers() != config_.n_layers || mask.heads() != config_.n_heads) {
      throw UsageError("head mask " + std::to_string(mask.layers()) + "x" + std::to_string(mask.heads()) +
                       " does not match model " + std::to_string(config_.n_layers) + "x" +
                       std::to_string(config_.n_heads));
    }
    mask_ = mask;
  }

  /// Embeddings and the attention stack. Computation covers positions up to
  /// the last real token; keys at padded positions inside that range are
  /// excluded with an additive mask, and trailing padding is never read.
  EncoderOutput encode(const EncodedInput& input, const ForwardOptions& opts = {}) const {
    if (input.ids.size() != input.mask.size()) {
      throw DataError("ids/mask length mismatch: " + std::to_string(input.ids.size()) + " vs " +
                      std::to_string(input.mask.size()));
    }
    if (input.ids.size() > config_.max_len) {
      throw DataError("sequence of " + std::to_string(input.ids.size()) + " tokens exceeds max_len " +
                      std::to_string(config_.max_len));
    }
    for (std::size_t t = 0; t < input.ids.size(); ++t) {
      if (input.ids[t] < 0 || static_cast<std::size_t>(input.ids[t]) >= config_.vocab_size) {
        throw DataError("token id " + std::to_string(input.ids[t]) + " at position " + std::to_string(t) +
                        " outside vocabulary of size " + std::to_string(config_.vocab_size));
      }
    }
    std::size_t length = 0;
    for (std::size_t t = 0; t < input.mask.size(); ++t)
      if (input.mask[t]) length = t + 1;
    if (length == 0) throw DataError("empty sequence: no real tokens");

    EncoderOutput out;
    out.length = length;
    out.real.assign(input.mask.begin(), input.mask.begin() + static_cast<std::ptrdiff_t>(length));
    const std::span<const int> ids(input.ids.data(), length);
    const std::vector<double> key_mask = additive_pad_mask(out.real);

    Tensor x = add(embedding(token_embedding_, ids), slice(position_embedding_, 0, 0, length));
    x = maybe_dropout(x, opts);

    const std::size_t dh = config_.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    out.head_outputs.resize(config_.n_layers);
    if (opts.keep_attention) out.attention.resize(config_.n_layers);

    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      const EncoderLayer& layer = layers_[l];
      std::vector<Tensor> heads;
      heads.reserve(config_.n_heads);
      for (std::size_t h = 0; h < config_.n_heads; ++h) {
        const AttentionHead& w = layer.heads[h];
        Tensor q = add_bias(matmul(x, w.wq), w.bq);
        Tensor k = add_bias(matmul(x, w.wk), w.bk);
        Tensor v = add_bias(matmul(x, w.wv), w.bv);
        Tensor weights = softmax(scale(matmul(q, transpose(k)), inv_sqrt_dh), key_mask);
        if (opts.keep_attention) out.attention[l].push_back(weights);
        Tensor context = scale(matmul(weights, v), mask_.active(l, h) ? 1.0 : 0.0);
        if (opts.hook) context = opts.hook(l, h, context);
        out.head_outputs[l].push_back(context);
        heads.push_back(context);
      }
      Tensor merged = add_bias(matmul(concat(heads, 1), layer.wo), layer.bo);
      x = layer_norm(add(x, maybe_dropout(merged, opts)), layer.norm1_gamma, layer.norm1_beta);
      Tensor ff = add_bias(matmul(gelu(add_bias(matmul(x, layer.ff_in), layer.ff_in_bias)), layer.ff_out),
                           layer.ff_out_bias);
      x = layer_norm(add(x, maybe_dropout(ff, opts)), layer.norm2_gamma, layer.norm2_beta);
    }
    out.hidden = x;
    return out;
  }

  /// Top-layer [final forward state, first-position backward state], [1, 2*lstm_hidden].
  Tensor bilstm(const Tensor& hidden) const {
    if (!hidden.defined()) throw DataError("bilstm: empty sequence");
    if (hidden.rank() != 2 || hidden.dim(1) != config_.d_model) {
      throw ConfigError("bilstm: expected [T," + std::to_string(config_.d_model) + "], got " +
                        shape_str(hidden.shape()));
    }
    const std::size_t steps = hidden.dim(0);
    Tensor seq = hidden;
    Tensor last_forward, first_backward;
    for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
      std::vector<Tensor> fwd = run_direction(seq, lstm_[l].forward, false);
      std::vector<Tensor> bwd = run_direction(seq, lstm_[l].backward, true);
      last_forward = fwd.back();
      first_backward = bwd.front();
      if (l + 1 < config_.lstm_layers) {
        std::vector<Tensor> rows;
        rows.reserve(steps);
        for (std::size_t t = 0; t < steps; ++t) rows.push_back(concat({fwd[t], bwd[t]}, 1));
        seq = concat(rows, 0);
      }
    }
    return concat({last_forward, first_backward}, 1);
  }

  /// logit = w . features + b, probability = sigmoid(logit).
  ModelOutput classify(const Tensor& features) const {
    if (features.rank() != 2 || features.dim(0) != 1 || features.dim(1) != 2 * config_.lstm_hidden) {
      throw ConfigError("classify: expected features [1," + std::to_string(2 * config_.lstm_hidden) + "], got " +
                        shape_str(features.shape()));
    }
    ModelOutput out;
    out.logit = add_bias(matmul(features, classifier_weight_), classifier_bias_);
    out.probability = sigmoid(out.logit);
    return out;
  }

  /// Full pipeline. The BiLSTM reads only real positions, so padded tokens
  /// never influence the logit.
  ModelOutput forward(const EncodedInput& input, const ForwardOptions& opts = {}) const {
    EncoderOutput enc = encode(input, opts);
    ModelOutput out = classify(bilstm(real_rows(enc.hidden, enc.real)));
    out.head_outputs = std::move(enc.head_outputs);
    out.attention = std::move(enc.attention);
    out.real = std::move(enc.real);
    return out;
  }

 private:
  struct AttentionHead {
    Tensor wq, bq, wk, bk, wv, bv;
  };
  struct EncoderLayer {
    std::vector<AttentionHead> heads;
    Tensor wo, bo, norm1_gamma, norm1_beta, ff_in, ff_in_bias, ff_out, ff_out_bias, norm2_gamma, norm2_beta;
  };
  // Gate blocks are laid out input, forget, cell, output along the last axis.
  struct LstmDirection {
    Tensor input_weight, hidden_weight, bias;
  };
  struct LstmLayer {
    LstmDirection forward, backward;
  };

  Model(const ModelConfig& config, std::optional<Rng> rng) : config_(config) {
    config_.validate();
    mask_ = HeadMask(config_.n_layers, config_.n_heads);
    const std::size_t d = config_.d_model, dh = config_.head_dim(), hid = config_.lstm_hidden;

    auto weight = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out) {
      std::vector<double> v(fan_in * fan_out, 0.0);
      if (rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& x : v) x = rng->uniform(-bound, bound);
      }
      return params_.add(name, Tensor::parameter({fan_in, fan_out}, std::move(v)));
    };
    auto table = [&](const std::string& name, std::size_t rows) {
      std::vector<double> v(rows * d, 0.0);
      if (rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(d));
        for (auto& x : v) x = rng->uniform(-bound, bound);
      }
      return params_.add(name, Tensor::parameter({rows, d}, std::move(v)));
    };
    auto constant = [&](const std::string& name, std::size_t n, double value) {
      return params_.add(name, Tensor::parameter({n}, std::vector<double>(n, rng ? value : 0.0)));
    };

    token_embedding_ = table("embed.token", config_.vocab_size);
    position_embedding_ = table("embed.position", config_.max_len);
    layers_.resize(config_.n_layers);
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      const std::string p = "encoder." + std::to_string(l) + ".";
      EncoderLayer& layer = layers_[l];
      layer.heads.resize(config_.n_heads);
      for (std::size_t h = 0; h < config_.n_heads; ++h) {
        const std::string hp = p + "attn.head." + std::to_string(h) + ".";
        AttentionHead& w = layer.heads[h];
        w.wq = weight(hp + "query.weight", d, dh);
        w.bq = constant(hp + "query.bias", dh, 0.0);
        w.wk = weight(hp + "key.weight", d, dh);
        w.bk = constant(hp + "key.bias", dh, 0.0);
        w.wv = weight(hp + "value.weight", d, dh);
        w.bv = constant(hp + "value.bias", dh, 0.0);
      }
      layer.wo = weight(p + "attn.out.weight", d, d);
      layer.bo = constant(p + "attn.out.bias", d, 0.0);
      layer.norm1_gamma = constant(p + "norm1.gamma", d, 1.0);
      layer.norm1_beta = constant(p + "norm1.beta", d, 0.0);
      layer.ff_in = weight(p + "ffn.in.weight", d, config_.d_ff);
      layer.ff_in_bias = constant(p + "ffn.in.bias", config_.d_ff, 0.0);
      layer.ff_out = weight(p + "ffn.out.weight", config_.d_ff, d);
      layer.ff_out_bias = constant(p + "ffn.out.bias", d, 0.0);
      layer.norm2_gamma = constant(p + "norm2.gamma", d, 1.0);
      layer.norm2_beta = constant(p + "norm2.beta", d, 0.0);
    }
    lstm_.resize(config_.lstm_layers);
    for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
      const std::size_t in = l == 0 ? d : 2 * hid;
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string p = "bilstm." + std::to_string(l) + "." + dir + ".";
        LstmDirection& w = std::string(dir) == "fwd" ? lstm_[l].forward : lstm_[l].backward;
        w.input_weight = weight(p + "input.weight", in, 4 * hid);
        w.hidden_weight = weight(p + "hidden.weight", hid, 4 * hid);
        w.bias = constant(p + "bias", 4 * hid, 0.0);
      }
    }
    classifier_weight_ = weight("classifier.weight", 2 * hid, 1);
    classifier_bias_ = constant("classifier.bias", 1, 0.0);
  }

  static Tensor real_rows(const Tensor& hidden, const std::vector<unsigned char>& real) {
    std::vector<Tensor> runs;
    std::size_t t = 0;
    while (t < real.size()) {
      if (!real[t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < real.size() && real[end]) ++end;
      if (t == 0 && end == real.size()) return hidden;
      runs.push_back(slice(hidden, 0, t, end));
      t = end;
    }
    return runs.size() == 1 ? runs.front() : concat(runs, 0);
  }

  Tensor maybe_dropout(const Tensor& x, const ForwardOptions& opts) const {
    if (!opts.training || config_.dropout_rate <= 0.0) return x;
    if (opts.rng == nullptr) throw UsageError("dropout during training needs an Rng");
    return dropout(x, config_.dropout_rate, *opts.rng);
  }

  /// Hidden state at every position, in position order.
  std::vector<Tensor> run_direction(const Tensor& seq, const LstmDirection& w, bool reverse) const {
    const std::size_t steps = seq.dim(0), hid = config_.lstm_hidden;
    Tensor projected = add_bias(matmul(seq, w.input_weight), w.bias);
    Tensor h = Tensor::zeros({1, hid});
    Tensor c = Tensor::zeros({1, hid});
    std::vector<Tensor> states(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      const std::size_t t = reverse ? steps - 1 - i : i;
      Tensor gates = add(slice(projected, 0, t, t + 1), matmul(h, w.hidden_weight));
      Tensor in_gate = sigmoid(slice(gates, 1, 0, hid));
      Tensor forget_gate = sigmoid(slice(gates, 1, hid, 2 * hid));
      Tensor candidate = tanh(slice(gates, 1, 2 * hid, 3 * hid));
      Tensor out_gate = sigmoid(slice(gates, 1, 3 * hid, 4 * hid));
      c = add(mul(forget_gate, c), mul(in_gate, candidate));
      h = mul(out_gate, tanh(c));
      states[t] = h;
    }
    return states;
  }

  ModelConfig config_;
  HeadMask mask_;
  ParameterSet params_;
  Tensor token_embedding_, position_embedding_;
  std::vector<EncoderLayer> layers_;
  std::vector<LstmLayer> lstm_;
  Tensor classifier_weight_, classifier_bias_;
};

inline constexpr double kProbabilityClip = 1e-12;

/// -[y ln p + (1-y) ln(1-p)] with p clipped to [1e-12, 1-1e-12] inside the loss.
inline Tensor bce_loss(const Tensor& probability, int label) {
  if (label != 0 && label != 1) throw UsageError("bce_loss: label must be 0 or 1");
  Tensor p = clamp(probability, kProbabilityClip, 1.0 - kProbabilityClip);
  Tensor term = label == 1 ? log(p) : log(add_scalar(scale(p, -1.0), 1.0));
  return scale(sum(term), -1.0);
}

}  // namespace headprune
