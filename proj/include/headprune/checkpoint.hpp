#pragma once

// Checkpoint file: one line of compact JSON (the manifest) followed by the
// raw payload of every parameter as little-endian IEEE-754 doubles, in
// manifest order. The manifest records each tensor's shape and byte offset,
// the payload size and its FNV-1a checksum.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "headprune/data.hpp"
#include "headprune/errors.hpp"
#include "headprune/nn.hpp"
#include "headprune/serialize.hpp"
#include "headprune/training.hpp"

namespace headprune {

inline constexpr const char* kCheckpointFormat = "headprune-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMetadata {
  std::size_t epoch = 0;
  double validation_loss = 0.0;
  std::uint64_t corpus_fingerprint = 0;
};

struct Checkpoint {
  Model model;
  Vocabulary vocabulary;
  TaskSpec task;
  TrainConfig train_config;
  CheckpointMetadata metadata;
};

namespace detail {

inline void put_le64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string payload;
  Json tensors = Json::array();
  for (const auto& p : ckpt.model.parameters().items()) {
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", payload.size()}});
    for (double v : p.tensor.data()) detail::put_le64(payload, v);
  }
  Json manifest = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"model_config", to_json(ckpt.model.config())},
      {"train_config", to_json(ckpt.train_config)},
      {"task", ckpt.task.name()},
      {"vocabulary", ckpt.vocabulary.learned_pieces()},
      {"head_mask", to_json(ckpt.model.head_mask())},
      {"metadata",
       {{"epoch", ckpt.metadata.epoch},
        {"validation_loss", ckpt.metadata.validation_loss},
        {"corpus_fingerprint", hex64(ckpt.metadata.corpus_fingerprint)}}},
      {"tensors", tensors},
      {"payload_bytes", payload.size()},
      {"payload_fnv1a", hex64(fnv1a(payload.data(), payload.size()))},
  };
  return manifest.dump() + '\n' + payload;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

/// Parses a whole checkpoint image; nothing is returned unless every check passes.
inline Checkpoint decode_checkpoint(const std::string& bytes) {
  using Kind = CheckpointError::Kind;
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw CheckpointError(Kind::kTruncated, "manifest line is incomplete");
  Json manifest;
  try {
    manifest = Json::parse(bytes.substr(0, newline));
  } catch (const Json::exception& e) {
    throw CheckpointError(Kind::kFormat, std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    if (manifest.at("format").get<std::string>() != kCheckpointFormat) {
      throw CheckpointError(Kind::kFormat, "not a headprune checkpoint");
    }
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(Kind::kVersion, "format version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
    }
    const std::size_t payload_bytes = manifest.at("payload_bytes").get<std::size_t>();
    const std::size_t available = bytes.size() - newline - 1;
    if (available < payload_bytes) {
      throw CheckpointError(Kind::kTruncated, "payload has " + std::to_string(available) + " of " +
                                                  std::to_string(payload_bytes) + " bytes");
    }
    if (available > payload_bytes) throw CheckpointError(Kind::kCorrupt, "trailing bytes after payload");
    const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + newline + 1);
    if (hex64(fnv1a(payload, payload_bytes)) != manifest.at("payload_fnv1a").get<std::string>()) {
      throw CheckpointError(Kind::kCorrupt, "payload checksum mismatch");
    }

    ModelConfig mc;
    read_json(manifest.at("model_config"), mc, "model_config");
    TrainConfig tc;
    read_json(manifest.at("train_config"), tc, "train_config");
    Checkpoint ckpt{Model(mc, 0), Vocabulary(manifest.at("vocabulary").get<std::vector<std::string>>()),
                    TaskSpec::parse(manifest.at("task").get<std::string>()), tc, {}};
    if (ckpt.vocabulary.size() != mc.vocab_size) {
      throw CheckpointError(Kind::kShape, "vocabulary has " + std::to_string(ckpt.vocabulary.size()) +
                                              " pieces but model expects " + std::to_string(mc.vocab_size));
    }

    const Json& tensors = manifest.at("tensors");
    auto params = ckpt.model.parameters().items();
    if (tensors.size() != params.size()) {
      throw CheckpointError(Kind::kShape, "checkpoint holds " + std::to_string(tensors.size()) +
                                              " tensors, model has " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Json& t = tensors[i];
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      if (name != params[i].name || shape != params[i].tensor.shape()) {
        throw CheckpointError(Kind::kShape, "tensor " + std::to_string(i) + " is " + name + shape_str(shape) +
                                                ", model expects " + params[i].name +
                                                shape_str(params[i].tensor.shape()));
      }
      const std::size_t offset = t.at("offset").get<std::size_t>();
      auto dst = params[i].tensor.mutable_data();
      if (offset + 8 * dst.size() > payload_bytes) throw CheckpointError(Kind::kCorrupt, "tensor " + name + " overruns payload");
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = detail::get_le64(payload + offset + 8 * k);
    }

    const Json& mask_rows = manifest.at("head_mask");
    HeadMask mask(mc.n_layers, mc.n_heads);
    if (mask_rows.size() != mc.n_layers) throw CheckpointError(Kind::kShape, "head mask layer count mismatch");
    for (std::size_t l = 0; l < mc.n_layers; ++l) {
      if (mask_rows[l].size() != mc.n_heads) throw CheckpointError(Kind::kShape, "head mask head count mismatch");
      for (std::size_t h = 0; h < mc.n_heads; ++h) mask.set(l, h, mask_rows[l][h].get<int>() != 0);
    }
    ckpt.model.set_head_mask(mask);

    const Json& meta = manifest.at("metadata");
    ckpt.metadata.epoch = meta.at("epoch").get<std::size_t>();
    ckpt.metadata.validation_loss = meta.at("validation_loss").get<double>();
    ckpt.metadata.corpus_fingerprint = parse_hex64(meta.at("corpus_fingerprint").get<std::string>());
    return ckpt;
  } catch (const Json::exception& e) {
    throw CheckpointError(Kind::kFormat, std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::kFormat, e.what());
  } catch (const DataError& e) {
    throw CheckpointError(Kind::kFormat, e.what());
  } catch (const UsageError& e) {
    throw CheckpointError(Kind::kFormat, e.what());
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace headprune
