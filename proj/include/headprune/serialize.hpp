#pragma once

// JSON forms of the configuration types. Readers are strict: an unknown key
// or a value of the wrong type is a ConfigError naming the field.

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <string>

#include "headprune/errors.hpp"
#include "headprune/nn.hpp"
#include "headprune/training.hpp"
#include "json.hpp"

namespace headprune {

using Json = nlohmann::json;

namespace detail {

using FieldReader = std::function<void(const Json&)>;

inline void read_object(const Json& obj, const std::string& where, const std::map<std::string, FieldReader>& fields) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown field " + where + "." + key);
    try {
      it->second(value);
    } catch (const Json::exception&) {
      throw ConfigError("field " + where + "." + key + " has the wrong type");
    }
  }
}

template <class T>
FieldReader count_field(T& target, const std::string& name) {
  return [&target, name](const Json& v) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("field " + name + " must be an integer");
    if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ConfigError("field " + name + " must be non-negative");
    target = v.get<T>();
  };
}

inline FieldReader real_field(double& target, const std::string& name) {
  return [&target, name](const Json& v) {
    if (!v.is_number()) throw ConfigError("field " + name + " must be a number");
    target = v.get<double>();
  };
}

}  // namespace detail

inline Json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},         {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},               {"lstm_hidden", c.lstm_hidden},
          {"lstm_layers", c.lstm_layers}, {"max_len", c.max_len},       {"dropout_rate", c.dropout_rate}};
}

/// Overlays the fields present in `j` onto `c`.
inline void read_json(const Json& j, ModelConfig& c, const std::string& where = "model") {
  detail::read_object(j, where,
                      {{"vocab_size", detail::count_field(c.vocab_size, where + ".vocab_size")},
                       {"d_model", detail::count_field(c.d_model, where + ".d_model")},
                       {"n_layers", detail::count_field(c.n_layers, where + ".n_layers")},
                       {"n_heads", detail::count_field(c.n_heads, where + ".n_heads")},
                       {"d_ff", detail::count_field(c.d_ff, where + ".d_ff")},
                       {"lstm_hidden", detail::count_field(c.lstm_hidden, where + ".lstm_hidden")},
                       {"lstm_layers", detail::count_field(c.lstm_layers, where + ".lstm_layers")},
                       {"max_len", detail::count_field(c.max_len, where + ".max_len")},
                       {"dropout_rate", detail::real_field(c.dropout_rate, where + ".dropout_rate")}});
}

inline Json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
          {"patience", c.patience},           {"weight_decay", c.weight_decay}, {"beta1", c.beta1},
          {"beta2", c.beta2},                 {"epsilon", c.epsilon},       {"seed", c.seed}};
}

inline void read_json(const Json& j, TrainConfig& c, const std::string& where = "train") {
  detail::read_object(j, where,
                      {{"learning_rate", detail::real_field(c.learning_rate, where + ".learning_rate")},
                       {"batch_size", detail::count_field(c.batch_size, where + ".batch_size")},
                       {"max_epochs", detail::count_field(c.max_epochs, where + ".max_epochs")},
                       {"patience", detail::count_field(c.patience, where + ".patience")},
                       {"weight_decay", detail::real_field(c.weight_decay, where + ".weight_decay")},
                       {"beta1", detail::real_field(c.beta1, where + ".beta1")},
                       {"beta2", detail::real_field(c.beta2, where + ".beta2")},
                       {"epsilon", detail::real_field(c.epsilon, where + ".epsilon")},
                       {"seed", detail::count_field(c.seed, where + ".seed")}});
}

inline Json to_json(const HeadMask& m) {
  Json rows = Json::array();
  for (std::size_t l = 0; l < m.layers(); ++l) {
    Json row = Json::array();
    for (std::size_t h = 0; h < m.heads(); ++h) row.push_back(m.active(l, h) ? 1 : 0);
    rows.push_back(row);
  }
  return rows;
}

inline Json to_json(const EvalReport& r) {
  return {{"task", r.task},
          {"n", r.n},
          {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"accuracy", r.accuracy},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"weighted_precision", r.weighted_precision},
          {"weighted_recall", r.weighted_recall},
          {"precision_undefined", r.precision_undefined},
          {"recall_undefined", r.recall_undefined}};
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw ConfigError("expected 16 lowercase hex digits, got '" + s + "'");
  }
  return std::stoull(s, nullptr, 16);
}

}  // namespace headprune
