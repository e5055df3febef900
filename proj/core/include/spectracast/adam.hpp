// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "spectracast/tensor.hpp"

namespace spectracast {

template <class T>
using ParameterSet = std::map<std::string, Tensor<T>>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moment buffers are keyed by parameter name so the
// state serializes alongside the parameters it belongs to.
template <class T>
struct AdamState {
  AdamConfig cfg;
  std::int64_t step = 0;
  std::map<std::string, std::vector<T>> m, v;
};

// One update over `params`, consuming the gradients accumulated on them.
// Parameters without a gradient buffer are left untouched. Iteration order
// is the map's (lexicographic), fixed across runs.
template <class T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state) {
  state.step += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(p.size(), T(0));
    if (v.empty()) v.assign(p.size(), T(0));
    if (m.size() != p.size() || v.size() != p.size()) {
      throw DimensionError("adam_step: moment buffers for '" + name +
                           "' do not match parameter extent");
    }
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      data[i] -= static_cast<T>(state.cfg.lr * m_hat / (std::sqrt(v_hat) + state.cfg.eps));
    }
  }
}

template <class T>
void zero_grads(ParameterSet<T>& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

}  // namespace spectracast
