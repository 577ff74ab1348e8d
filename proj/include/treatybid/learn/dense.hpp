#pragma once

// Fully connected ReLU network with hand-derived reverse mode.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::learn {

/// Parameters are stored flat, layer by layer: weights (n_out x n_in,
/// row-major) followed by biases (n_out).
class DenseNet {
 public:
  struct Cache {
    /// inputs[l] is the input to layer l; pre[l] its pre-activation.
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> pre;
    const DenseNet* owner = nullptr;
    std::uint64_t version = 0;
    std::uint64_t net_id = 0;
  };

  DenseNet() = default;

  /// Zero-initialized network.
  explicit DenseNet(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw ConfigError("network: need at least input and output sizes");
    for (std::size_t s : sizes_) {
      if (s == 0) throw ConfigError("network: layer sizes must be positive");
    }
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(off);
      off += sizes_[l] * sizes_[l + 1];
      b_off_.push_back(off);
      off += sizes_[l + 1];
    }
    params_.assign(off, 0.0);
    id_ = next_id();
  }

  /// Fan-in scaled uniform weights in [-1/sqrt(n_in), 1/sqrt(n_in)], zero biases.
  static DenseNet initialized(std::vector<std::size_t> layer_sizes, Engine& eng, double gain = 1.0) {
    DenseNet net(std::move(layer_sizes));
    for (std::size_t l = 0; l < net.layers(); ++l) {
      const double bound = gain / std::sqrt(static_cast<double>(net.sizes_[l]));
      const std::size_t n = net.sizes_[l] * net.sizes_[l + 1];
      for (std::size_t k = 0; k < n; ++k) net.params_[net.w_off_[l] + k] = uniform(eng, -bound, bound);
    }
    return net;
  }

  static std::size_t param_count_for(const std::vector<std::size_t>& sizes) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += (sizes[l] + 1) * sizes[l + 1];
    return n;
  }

  DenseNet(const DenseNet& o)
      : sizes_(o.sizes_), w_off_(o.w_off_), b_off_(o.b_off_), params_(o.params_), id_(next_id()) {}
  DenseNet& operator=(const DenseNet& o) {
    sizes_ = o.sizes_;
    w_off_ = o.w_off_;
    b_off_ = o.b_off_;
    params_ = o.params_;
    ++version_;
    return *this;
  }
  DenseNet(DenseNet&&) = default;
  DenseNet& operator=(DenseNet&&) = default;

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t layers() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_params() const { return params_.size(); }
  std::uint64_t version() const { return version_; }

  std::span<const double> params() const { return params_; }

  /// Mutable access invalidates outstanding caches.
  std::span<double> mutable_params() {
    ++version_;
    return params_;
  }

  void set_params(std::span<const double> p) {
    if (p.size() != params_.size()) throw ContractViolation("network: parameter size mismatch");
    std::copy(p.begin(), p.end(), params_.begin());
    ++version_;
  }

  double weight(std::size_t layer, std::size_t out, std::size_t in) const {
    return params_[w_off_[layer] + out * sizes_[layer] + in];
  }
  double bias(std::size_t layer, std::size_t out) const { return params_[b_off_[layer] + out]; }
  std::size_t weight_index(std::size_t layer, std::size_t out, std::size_t in) const {
    return w_off_[layer] + out * sizes_[layer] + in;
  }
  std::size_t bias_index(std::size_t layer, std::size_t out) const { return b_off_[layer] + out; }

  std::vector<double> forward(std::span<const double> x, Cache* cache = nullptr) const {
    if (x.size() != input_dim()) {
      throw ContractViolation("network: input has " + std::to_string(x.size()) + " values, expected " +
                              std::to_string(input_dim()));
    }
    if (cache) {
      cache->inputs.resize(layers());
      cache->pre.resize(layers());
      cache->owner = this;
      cache->version = version_;
      cache->net_id = id_;
    }
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t l = 0; l < layers(); ++l) {
      const std::size_t n_in = sizes_[l];
      const std::size_t n_out = sizes_[l + 1];
      std::vector<double> z(n_out);
      const double* w = params_.data() + w_off_[l];
      const double* b = params_.data() + b_off_[l];
      for (std::size_t o = 0; o < n_out; ++o) {
        double s = b[o];
        const double* row = w + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) s += row[i] * a[i];
        z[o] = s;
      }
      const bool hidden = l + 1 < layers();
      if (cache) {
        cache->inputs[l] = a;
        cache->pre[l] = z;
      }
      if (hidden) {
        for (double& v : z) v = v > 0.0 ? v : 0.0;
      }
      a = std::move(z);
    }
    return a;
  }

  /// Accumulates parameter gradients into `grad_params` (size num_params())
  /// and returns the gradient with respect to the input.
  std::vector<double> backward(const Cache& cache, std::span<const double> grad_out,
                               std::span<double> grad_params) const {
    if (cache.owner != this || cache.version != version_ || cache.net_id != id_ ||
        cache.pre.size() != layers()) {
      throw ContractViolation("network: stale cache (parameters changed since forward)");
    }
    if (grad_out.size() != output_dim()) throw ContractViolation("network: output gradient size mismatch");
    if (grad_params.size() != params_.size()) throw ContractViolation("network: gradient buffer size mismatch");
    std::vector<double> delta(grad_out.begin(), grad_out.end());
    for (std::size_t l = layers(); l-- > 0;) {
      const std::size_t n_in = sizes_[l];
      const std::size_t n_out = sizes_[l + 1];
      if (l + 1 < layers()) {
        for (std::size_t o = 0; o < n_out; ++o) {
          if (!(cache.pre[l][o] > 0.0)) delta[o] = 0.0;
        }
      }
      const auto& a = cache.inputs[l];
      double* gw = grad_params.data() + w_off_[l];
      double* gb = grad_params.data() + b_off_[l];
      const double* w = params_.data() + w_off_[l];
      std::vector<double> prev(n_in, 0.0);
      for (std::size_t o = 0; o < n_out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* grow = gw + o * n_in;
        const double* wrow = w + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) {
          grow[i] += d * a[i];
          prev[i] += d * wrow[i];
        }
      }
      delta = std::move(prev);
    }
    return delta;
  }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> w_off_;
  std::vector<std::size_t> b_off_;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
  std::uint64_t id_ = 0;
};

}  // namespace treatybid::learn
