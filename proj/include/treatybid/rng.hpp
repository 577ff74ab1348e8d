#pragma once

// Seeded random streams.
//
// A run owns one master seed. Every consumer (treaty generation, loss
// realization, utility noise, each agent's policy, bootstrap resampling)
// draws from its own named substream so that two runs can share some
// streams while others diverge.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace treatybid {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent engine derived from (master seed, stream name, index).
inline Engine substream(std::uint64_t master, std::string_view name,
                        std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(master ^ splitmix64(fnv1a(name)));
  s = splitmix64(s + index);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(fnv1a(name))};
  return Engine(seq);
}

// Distributions are hand-written so that draw counts are fixed and
// independent of the standard library version; nothing is cached between
// calls, which keeps engine state the only thing a checkpoint must capture.

/// Uniform on [0, 1) with 53 bits of resolution.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(eng);
}

/// Box-Muller; consumes exactly two uniforms.
inline double standard_normal(Engine& eng) {
  const double u1 = 1.0 - uniform01(eng);  // (0, 1]
  const double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double normal(Engine& eng, double mean, double sd) {
  return mean + sd * standard_normal(eng);
}

/// Poisson count by Knuth's product-of-uniforms method. Means above 30 are
/// split into chunks so exp(-mean) never underflows.
inline std::uint64_t poisson(Engine& eng, double mean) {
  if (mean <= 0.0) return 0;
  std::uint64_t total = 0;
  while (mean > 30.0) {
    // Poisson(a + b) = Poisson(a) + Poisson(b)
    total += poisson(eng, 30.0);
    mean -= 30.0;
  }
  const double limit = std::exp(-mean);
  double prod = uniform01(eng);
  std::uint64_t k = 0;
  while (prod > limit) {
    prod *= uniform01(eng);
    ++k;
  }
  return total + k;
}

/// Lognormal parameterized by its true mean and log-scale sigma.
inline double lognormal_by_mean(Engine& eng, double mean, double sigma) {
  const double mu = std::log(mean) - 0.5 * sigma * sigma;
  return std::exp(mu + sigma * standard_normal(eng));
}

/// Pareto (type I) via inverse CDF of a supplied uniform.
inline double pareto_from_uniform(double u, double shape, double scale) {
  return scale * std::pow(1.0 - u, -1.0 / shape);
}

inline std::string save_engine(const Engine& eng) {
  std::ostringstream out;
  out << eng;
  return out.str();
}

inline void load_engine(Engine& eng, const std::string& state) {
  std::istringstream in(state);
  in >> eng;
}

}  // namespace treatybid
