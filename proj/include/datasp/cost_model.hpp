#pragma once

// Context -> edge cost network: a ReLU MLP whose output is a residual on top
// of the prior costs,
//   cost_e = floor + softplus(raw_e + softplus^-1(prior_e - floor)).
// The output layer starts at zero, so an untrained model predicts the prior.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "datasp/error.hpp"
#include "datasp/synthetic.hpp"

namespace datasp {

inline double inverse_softplus(double y) {
  require(y > 0.0, "inverse_softplus: argument must be positive");
  return y > 30.0 ? y : y + std::log(-std::expm1(-y));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct ModelArchitecture {
  std::size_t feature_dim = 0;
  std::vector<std::size_t> hidden{128, 128, 128};
  std::size_t edge_count = 0;
  double cost_floor = 1e-3;

  /// Layer widths from input to output.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{feature_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(edge_count);
    return w;
  }

  std::size_t parameter_count() const {
    const auto w = widths();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) total += w[l + 1] * w[l] + w[l + 1];
    return total;
  }

  friend bool operator==(const ModelArchitecture&, const ModelArchitecture&) = default;
};

class CostModel {
 public:
  /// Per-call activations needed by backward.
  struct Cache {
    std::vector<std::vector<double>> activations;  // input, each hidden output (post ReLU)
    std::vector<double> pre_output;                // raw + offset
  };

  CostModel() = default;
  CostModel(ModelArchitecture arch, std::vector<double> prior) : arch_(std::move(arch)), prior_(std::move(prior)) {
    require(arch_.feature_dim >= 1, "cost model: feature_dim must be positive");
    require(arch_.edge_count == prior_.size(), "cost model: prior length must equal edge count");
    require(arch_.cost_floor > 0.0, "cost model: cost floor must be positive");
    for (std::size_t h : arch_.hidden) require(h >= 1, "cost model: hidden widths must be positive");
    offset_.resize(prior_.size());
    // Priors at or below the floor are lifted just above it.
    for (std::size_t e = 0; e < prior_.size(); ++e)
      offset_[e] = inverse_softplus(std::max(prior_[e] - arch_.cost_floor, 1e-6));
  }

  const ModelArchitecture& architecture() const { return arch_; }
  const std::vector<double>& prior() const { return prior_; }

  /// He-normal hidden layers, zero biases, zero output layer.
  std::vector<double> init_params(std::uint64_t seed) const {
    std::vector<double> p(arch_.parameter_count(), 0.0);
    std::mt19937_64 rng(seed);
    const auto w = arch_.widths();
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const std::size_t in = w[l], out = w[l + 1];
      const bool last = l + 2 == w.size();
      std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(in)));
      for (std::size_t t = 0; t < out * in; ++t) p[off + t] = last ? 0.0 : he(rng);
      off += out * in + out;
    }
    return p;
  }

  std::vector<double> predict(std::span<const double> params, std::span<const double> x,
                              Cache* cache = nullptr) const {
    require(params.size() == arch_.parameter_count(), "cost model: parameter vector has the wrong size");
    require(x.size() == arch_.feature_dim, "cost model: feature length mismatch");
    const auto w = arch_.widths();
    std::vector<double> a(x.begin(), x.end());
    if (cache) cache->activations.assign(1, a);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const std::size_t in = w[l], out = w[l + 1];
      const double* wm = params.data() + off;
      const double* b = wm + out * in;
      std::vector<double> z(out);
      for (std::size_t r = 0; r < out; ++r) {
        double s = b[r];
        const double* row = wm + r * in;
        for (std::size_t c = 0; c < in; ++c) s += row[c] * a[c];
        z[r] = s;
      }
      off += out * in + out;
      if (l + 2 < w.size()) {
        for (double& v : z) v = std::max(v, 0.0);
        if (cache) cache->activations.push_back(z);
      }
      a = std::move(z);
    }
    std::vector<double> costs(a.size());
    for (std::size_t e = 0; e < a.size(); ++e) {
      a[e] += offset_[e];
      costs[e] = arch_.cost_floor + softplus(a[e]);
    }
    if (cache) cache->pre_output = std::move(a);
    return costs;
  }

  /// dL/dparams from dL/dcosts for the call that filled `cache`.
  std::vector<double> backward(std::span<const double> params, const Cache& cache,
                               std::span<const double> grad_costs) const {
    require(grad_costs.size() == arch_.edge_count, "cost model: gradient length mismatch");
    const auto w = arch_.widths();
    std::vector<double> grad(params.size(), 0.0);
    std::vector<double> delta(grad_costs.size());
    for (std::size_t e = 0; e < delta.size(); ++e) delta[e] = grad_costs[e] * sigmoid(cache.pre_output[e]);

    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      offsets.push_back(off);
      off += w[l + 1] * w[l] + w[l + 1];
    }
    for (std::size_t l = w.size() - 1; l-- > 0;) {
      const std::size_t in = w[l], out = w[l + 1];
      const auto& a = cache.activations[l];
      const double* wm = params.data() + offsets[l];
      double* gw = grad.data() + offsets[l];
      double* gb = gw + out * in;
      for (std::size_t r = 0; r < out; ++r) {
        gb[r] = delta[r];
        if (delta[r] == 0.0) continue;
        for (std::size_t c = 0; c < in; ++c) gw[r * in + c] = delta[r] * a[c];
      }
      if (l == 0) break;
      std::vector<double> prev(in, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        if (delta[r] == 0.0) continue;
        const double* row = wm + r * in;
        for (std::size_t c = 0; c < in; ++c) prev[c] += row[c] * delta[r];
      }
      for (std::size_t c = 0; c < in; ++c)
        if (a[c] <= 0.0) prev[c] = 0.0;
      delta = std::move(prev);
    }
    return grad;
  }

 private:
  ModelArchitecture arch_;
  std::vector<double> prior_;
  std::vector<double> offset_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;
};

inline void adam_update(std::vector<double>& params, std::span<const double> grad, double lr,
                        const AdamConfig& cfg, AdamState& st) {
  require(grad.size() == params.size(), "adam: gradient length mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t q = 0; q < params.size(); ++q) {
    st.m[q] = cfg.beta1 * st.m[q] + (1.0 - cfg.beta1) * grad[q];
    st.v[q] = cfg.beta2 * st.v[q] + (1.0 - cfg.beta2) * grad[q] * grad[q];
    params[q] -= lr * (st.m[q] / c1) / (std::sqrt(st.v[q] / c2) + cfg.epsilon);
  }
}

}  // namespace datasp
