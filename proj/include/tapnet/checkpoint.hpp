#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tapnet/data.hpp"
#include "tapnet/errors.hpp"
#include "tapnet/model.hpp"

namespace tapnet {

// Standard CRC-32 (reflected 0xEDB88320).
inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len,
                           std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (std::size_t i = 0; i < len; ++i) {
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  }
  return ~crc;
}

inline constexpr char kCheckpointMagic[4] = {'T', 'A', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"input_features", cfg.input_features},
      {"num_classes", cfg.num_classes},
      {"conv_filters", cfg.conv_filters},
      {"kernel_size", cfg.kernel_size},
      {"pool_size", cfg.pool_size},
      {"bilstm_units", cfg.bilstm_units},
      {"attention_width", cfg.attention_width},
      {"attention_mode", to_string(cfg.attention_mode)},
      {"dense_units", cfg.dense_units},
      {"dropout_rate", cfg.dropout_rate},
      {"seed", cfg.seed},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.input_features = j.at("input_features").get<std::size_t>();
  cfg.num_classes = j.at("num_classes").get<std::size_t>();
  cfg.conv_filters = j.at("conv_filters").get<std::size_t>();
  cfg.kernel_size = j.at("kernel_size").get<std::size_t>();
  cfg.pool_size = j.at("pool_size").get<std::size_t>();
  cfg.bilstm_units = j.at("bilstm_units").get<std::size_t>();
  cfg.attention_width = j.at("attention_width").get<std::size_t>();
  cfg.attention_mode = attention_mode_from_string(j.at("attention_mode").get<std::string>());
  cfg.dense_units = j.at("dense_units").get<std::size_t>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
  NormStats norm;  // empty when the model was trained on raw features
  bool has_norm = false;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::vector<std::uint8_t>& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

struct ByteReader {
  const std::uint8_t* p;
  std::size_t len;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > len) throw CheckpointError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace detail

// Layout: magic "TAPT" | u32 version | u32 JSON length | JSON header |
// per parameter array (canonical order): u64 count + little-endian f64s |
// u32 CRC-32 over everything before it. The JSON header carries the model
// config and, when present, the feature normalization stats.
inline void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                            const std::string& path,
                            const NormStats* norm = nullptr) {
  nlohmann::json header;
  header["config"] = model_config_to_json(cfg);
  if (norm && !norm->mean.empty()) {
    header["norm"] = {{"mean", norm->mean}, {"std", norm->stddev}};
  } else {
    header["norm"] = nullptr;
  }
  const std::string json = header.dump();

  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + 4);
  detail::put_u32(buf, kCheckpointVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(json.size()));
  buf.insert(buf.end(), json.begin(), json.end());
  for (const auto& ref : param_refs(params)) {
    detail::put_u64(buf, ref.values->size());
    for (double v : *ref.values) detail::put_f64(buf, v);
  }
  detail::put_u32(buf, crc32(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());

  if (buf.size() < 12) throw CheckpointError("checkpoint truncated");
  const std::uint32_t stored_crc = [&] {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
    return v;
  }();
  if (crc32(buf.data(), buf.size() - 4) != stored_crc) {
    throw CheckpointError("checkpoint CRC mismatch: " + path);
  }

  detail::ByteReader r{buf.data(), buf.size() - 4};
  r.need(4);
  if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint file: " + path);
  }
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t json_len = r.u32();
  r.need(json_len);
  const std::string json(reinterpret_cast<const char*>(buf.data() + r.pos), json_len);
  r.pos += json_len;

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.config = model_config_from_json(header.at("config"));
    if (header.contains("norm") && !header["norm"].is_null()) {
      ck.norm.mean = header["norm"].at("mean").get<std::vector<double>>();
      ck.norm.stddev = header["norm"].at("std").get<std::vector<double>>();
      ck.has_norm = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  ck.config.validate();
  if (ck.has_norm && ck.norm.mean.size() != ck.config.input_features) {
    throw CheckpointError("checkpoint norm stats do not match input_features");
  }

  ck.params = build(ck.config);  // allocates the canonical shapes
  for (auto& ref : param_refs(ck.params)) {
    const std::uint64_t count = r.u64();
    if (count != ref.values->size()) {
      throw CheckpointError(std::string("checkpoint shape mismatch in ") + ref.name +
                            ": file has " + std::to_string(count) + " values, config implies " +
                            std::to_string(ref.values->size()));
    }
    for (auto& v : *ref.values) v = r.f64();
  }
  if (r.pos != r.len) throw CheckpointError("checkpoint has trailing bytes");
  for (const auto& ref : param_refs(ck.params)) {
    if (!all_finite(*ref.values)) {
      throw CheckpointError(std::string("checkpoint contains non-finite values in ") +
                            ref.name);
    }
  }
  return ck;
}

}  // namespace tapnet
