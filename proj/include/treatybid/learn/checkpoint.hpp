#pragma once

// Versioned binary checkpoint container.
//
// Layout (all integers and floats little-endian):
//   magic "TBDCKPT1" | u32 version
//   agent manifest: u64 count, then (i64 id, str role, str algorithm)
//   networks: u64 count, then (str name, u64 n_layers, u64 sizes...,
//             f64s params, u8 has_adam [, f64s m, f64s v, u64 step,
//             f64 lr, f64 beta1, f64 beta2, f64 eps])
//   vectors:  u64 count, then (str name, f64s values)
//   counters: u64 count, then (str name, i64 value)
//   rng:      u64 count, then (str name, str engine_state)
//   blob:     str (opaque nested state, e.g. environment snapshot)

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/io/binary.hpp"
#include "treatybid/learn/dense.hpp"
#include "treatybid/learn/optim.hpp"

namespace treatybid::learn {

inline constexpr char kCheckpointMagic[] = "TBDCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct AgentManifestEntry {
  int id = 0;
  std::string role;
  std::string algorithm;

  bool operator==(const AgentManifestEntry&) const = default;
};

struct NetworkRecord {
  std::string name;
  std::vector<std::size_t> layer_sizes;
  std::vector<double> params;
  std::optional<AdamState> adam;
};

struct Checkpoint {
  std::vector<AgentManifestEntry> agents;
  std::vector<NetworkRecord> networks;
  std::vector<std::pair<std::string, std::vector<double>>> vectors;
  std::vector<std::pair<std::string, std::int64_t>> counters;
  std::vector<std::pair<std::string, std::string>> rng_states;
  std::string blob;

  void add_network(const std::string& name, const DenseNet& net, const AdamState* adam = nullptr) {
    NetworkRecord r;
    r.name = name;
    r.layer_sizes = net.layer_sizes();
    r.params.assign(net.params().begin(), net.params().end());
    if (adam) r.adam = *adam;
    networks.push_back(std::move(r));
  }

  const NetworkRecord& network(const std::string& name) const {
    for (const auto& n : networks) {
      if (n.name == name) return n;
    }
    throw FormatError("checkpoint: missing network '" + name + "'");
  }

  /// Restores parameters (and optimizer state when requested) in place.
  void restore_network(const std::string& name, DenseNet& net, AdamState* adam = nullptr) const {
    const auto& r = network(name);
    if (r.layer_sizes != net.layer_sizes()) throw FormatError("checkpoint: layer sizes differ for '" + name + "'");
    net.set_params(r.params);
    if (adam) {
      if (!r.adam) throw FormatError("checkpoint: no optimizer state for '" + name + "'");
      *adam = *r.adam;
    }
  }

  const std::vector<double>& vector(const std::string& name) const {
    for (const auto& [k, v] : vectors) {
      if (k == name) return v;
    }
    throw FormatError("checkpoint: missing vector '" + name + "'");
  }

  std::int64_t counter(const std::string& name) const {
    for (const auto& [k, v] : counters) {
      if (k == name) return v;
    }
    throw FormatError("checkpoint: missing counter '" + name + "'");
  }

  void restore_rng(const std::string& name, Engine& eng) const {
    for (const auto& [k, v] : rng_states) {
      if (k == name) {
        std::istringstream in(v);
        in >> eng;
        if (!in) throw FormatError("checkpoint: malformed rng state '" + name + "'");
        return;
      }
    }
    throw FormatError("checkpoint: missing rng state '" + name + "'");
  }
};

inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  io::BinaryWriter w(out);
  w.raw(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u64(c.agents.size());
  for (const auto& a : c.agents) {
    w.i64(a.id);
    w.str(a.role);
    w.str(a.algorithm);
  }
  w.u64(c.networks.size());
  for (const auto& n : c.networks) {
    w.str(n.name);
    w.u64(n.layer_sizes.size());
    for (std::size_t s : n.layer_sizes) w.u64(s);
    w.f64s(n.params);
    w.boolean(n.adam.has_value());
    if (n.adam) {
      w.f64s(n.adam->first_moment);
      w.f64s(n.adam->second_moment);
      w.u64(n.adam->step_count);
      w.f64(n.adam->learning_rate);
      w.f64(n.adam->beta1);
      w.f64(n.adam->beta2);
      w.f64(n.adam->epsilon);
    }
  }
  w.u64(c.vectors.size());
  for (const auto& [k, v] : c.vectors) {
    w.str(k);
    w.f64s(v);
  }
  w.u64(c.counters.size());
  for (const auto& [k, v] : c.counters) {
    w.str(k);
    w.i64(v);
  }
  w.u64(c.rng_states.size());
  for (const auto& [k, v] : c.rng_states) {
    w.str(k);
    w.str(v);
  }
  w.str(c.blob);
  if (!w.ok()) throw FormatError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  io::BinaryReader r(in);
  r.expect(std::string(kCheckpointMagic, 8), "magic bytes");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  const auto n_agents = r.u64();
  for (std::uint64_t i = 0; i < n_agents; ++i) {
    AgentManifestEntry a;
    a.id = static_cast<int>(r.i64());
    a.role = r.str();
    a.algorithm = r.str();
    c.agents.push_back(std::move(a));
  }
  const auto n_nets = r.u64();
  for (std::uint64_t i = 0; i < n_nets; ++i) {
    NetworkRecord n;
    n.name = r.str();
    const auto layers = r.u64();
    if (layers > 64) throw FormatError("checkpoint: implausible layer count");
    for (std::uint64_t l = 0; l < layers; ++l) n.layer_sizes.push_back(static_cast<std::size_t>(r.u64()));
    n.params = r.f64s();
    if (n.params.size() != DenseNet::param_count_for(n.layer_sizes)) {
      throw FormatError("checkpoint: parameter count does not match layer sizes for '" + n.name + "'");
    }
    if (r.boolean()) {
      AdamState a;
      a.first_moment = r.f64s();
      a.second_moment = r.f64s();
      a.step_count = r.u64();
      a.learning_rate = r.f64();
      a.beta1 = r.f64();
      a.beta2 = r.f64();
      a.epsilon = r.f64();
      n.adam = std::move(a);
    }
    c.networks.push_back(std::move(n));
  }
  const auto n_vec = r.u64();
  for (std::uint64_t i = 0; i < n_vec; ++i) {
    std::string k = r.str();
    c.vectors.emplace_back(std::move(k), r.f64s());
  }
  const auto n_cnt = r.u64();
  for (std::uint64_t i = 0; i < n_cnt; ++i) {
    std::string k = r.str();
    c.counters.emplace_back(std::move(k), r.i64());
  }
  const auto n_rng = r.u64();
  for (std::uint64_t i = 0; i < n_rng; ++i) {
    std::string k = r.str();
    c.rng_states.emplace_back(std::move(k), r.str());
  }
  c.blob = r.str();
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("checkpoint: cannot open '" + path + "' for writing");
  write_checkpoint(out, c);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace treatybid::learn
