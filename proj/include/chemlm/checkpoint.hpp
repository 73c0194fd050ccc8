// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: magic + JSON header (config, tensor directory) +
// little-endian f64 payload. Round-trips bit-exactly.
#pragma once

#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chemlm/model.hpp"
#include "chemlm/optimizer.hpp"

namespace chemlm {

struct CorruptCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelConfig config;
  ParamMap params;
  std::optional<AdamState> optimizer;
  long long step = 0;
};

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'C', 'L', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_f64_le(std::ostream& out, const std::vector<double>& v) {
  static_assert(sizeof(double) == 8);
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

inline void read_f64_le(std::istream& in, std::vector<double>& v) {
  for (double& x : v) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw CorruptCheckpoint("truncated tensor payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&x, &bits, 8);
  }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json dir = nlohmann::json::array();
  long long offset = 0;
  auto add_tensors = [&](const std::string& prefix, const ParamMap& m) {
    for (const auto& [name, t] : m) {
      dir.push_back({{"name", prefix + name},
                     {"dtype", "f64"},
                     {"shape", t.shape},
                     {"offset", offset}});
      offset += t.numel() * 8;
    }
  };
  add_tensors("param/", ck.params);
  if (ck.optimizer) {
    add_tensors("adam_m/", ck.optimizer->m);
    add_tensors("adam_v/", ck.optimizer->v);
  }
  nlohmann::json header = {{"format_version", detail::kCheckpointVersion},
                           {"config", config_to_json(ck.config)},
                           {"step", ck.step},
                           {"has_optimizer", ck.optimizer.has_value()},
                           {"optimizer_step", ck.optimizer ? ck.optimizer->step : 0},
                           {"tensors", dir}};
  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out.write(detail::kCheckpointMagic, 4);
  std::uint32_t ver = detail::kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  auto dump = [&](const ParamMap& m) {
    for (const auto& [name, t] : m) detail::write_f64_le(out, t.v);
  };
  dump(ck.params);
  if (ck.optimizer) {
    dump(ck.optimizer->m);
    dump(ck.optimizer->v);
  }
  if (!out) throw IoFailure("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::optional<ModelConfig>& expect = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
    throw CorruptCheckpoint("bad magic in " + path);
  std::uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  if (!in || ver != detail::kCheckpointVersion)
    throw CorruptCheckpoint("unsupported checkpoint version");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in || hlen == 0 || hlen > (1u << 26)) throw CorruptCheckpoint("bad header length");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw CorruptCheckpoint("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception&) {
    throw CorruptCheckpoint("unparseable header JSON");
  }
  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.step = header.at("step").get<long long>();
  if (expect && !(ck.config == *expect))
    throw ConfigMismatch("checkpoint config does not match expected config");
  bool has_opt = header.at("has_optimizer").get<bool>();
  ParamMap m_state, v_state;
  for (const auto& entry : header.at("tensors")) {
    std::string full = entry.at("name").get<std::string>();
    if (entry.at("dtype").get<std::string>() != "f64")
      throw CorruptCheckpoint("unsupported dtype");
    Tensor t(entry.at("shape").get<std::vector<int>>());
    detail::read_f64_le(in, t.v);
    auto slash = full.find('/');
    std::string group = full.substr(0, slash);
    std::string name = full.substr(slash + 1);
    if (group == "param") ck.params.emplace(name, std::move(t));
    else if (group == "adam_m") m_state.emplace(name, std::move(t));
    else if (group == "adam_v") v_state.emplace(name, std::move(t));
    else throw CorruptCheckpoint("unknown tensor group " + group);
  }
  if (has_opt) {
    AdamState st;
    st.m = std::move(m_state);
    st.v = std::move(v_state);
    st.step = header.at("optimizer_step").get<long long>();
    ck.optimizer = std::move(st);
  }
  // shape consistency against the declared config
  ParamMap ref = init_params(ck.config, 0);
  if (ref.size() != ck.params.size()) throw ConfigMismatch("parameter set does not match config");
  for (const auto& [name, t] : ref) {
    auto it = ck.params.find(name);
    if (it == ck.params.end() || !it->second.same_shape(t))
      throw ConfigMismatch("tensor " + name + " missing or misshapen for config");
  }
  return ck;
}

}  // namespace chemlm
