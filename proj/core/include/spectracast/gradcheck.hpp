// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient verification. Always runs in 64-bit; finite
// differences are not trustworthy in float.

#pragma once

#include <functional>
#include <map>
#include <string>

#include "spectracast/ops.hpp"
#include "spectracast/tensor.hpp"

namespace spectracast {

// Relative error between analytic and central-difference gradients:
//   max_i |analytic_i - fd_i| / max(1, |fd_i|)
// `f` must map the probe tensor to a scalar. Checks every coordinate.
inline double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         const Tensor<double>& x, double h = 1e-5) {
  Tensor<double> probe = x.clone();
  probe.set_requires_grad(true);
  Tensor<double> loss = f(probe);
  if (loss.size() != 1) throw ContractError("grad_check: f must return a scalar");
  backward(loss);
  std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  NoGradGuard no_grad;
  Tensor<double> work = x.clone();
  double max_err = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double orig = work.mutable_data()[i];
    work.mutable_data()[i] = orig + h;
    const double fp = f(work).item();
    work.mutable_data()[i] = orig - h;
    const double fm = f(work).item();
    work.mutable_data()[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

// Multi-parameter variant for whole modules: `loss_fn` closes over `params`
// and rebuilds the loss from their current values. At most
// `max_coords_per_tensor` coordinates per tensor are probed (seeded choice),
// which keeps deep stacks checkable in bounded time.
inline double grad_check_params(const std::function<Tensor<double>()>& loss_fn,
                                std::map<std::string, Tensor<double>>& params, double h = 1e-5,
                                std::size_t max_coords_per_tensor = 0, std::uint64_t seed = 0) {
  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor<double> loss = loss_fn();
  if (loss.size() != 1) throw ContractError("grad_check_params: loss must be scalar");
  backward(loss);

  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, t] : params) {
    analytic[name] = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                  : std::vector<double>(t.size(), 0.0);
  }

  NoGradGuard no_grad;
  Rng rng(mix_seed(seed, 0x6fd7));
  double max_err = 0.0;
  for (auto& [name, t] : params) {
    std::vector<std::size_t> coords;
    if (max_coords_per_tensor == 0 || t.size() <= max_coords_per_tensor) {
      coords.resize(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < max_coords_per_tensor; ++i) {
        coords.push_back(static_cast<std::size_t>(rng.uniform_index(t.size())));
      }
    }
    for (const std::size_t i : coords) {
      const double orig = t.mutable_data()[i];
      t.mutable_data()[i] = orig + h;
      const double fp = loss_fn().item();
      t.mutable_data()[i] = orig - h;
      const double fm = loss_fn().item();
      t.mutable_data()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic[name][i] - fd) / std::max(1.0, std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace spectracast
