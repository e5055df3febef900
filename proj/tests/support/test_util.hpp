#pragma once

#include <doctest.h>

#include <vector>

#include "spectracast/rng.hpp"
#include "spectracast/swin.hpp"
#include "spectracast/tensor.hpp"

namespace testutil {

template <class T = double>
spectracast::Tensor<T> randt(spectracast::Shape shape, spectracast::Rng& rng, double stddev = 1.0) {
  std::vector<T> data(spectracast::shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.normal(0.0, stddev));
  return spectracast::Tensor<T>::from_data(std::move(shape), std::move(data));
}

template <class T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
  REQUIRE(a.size() == b.size());
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err = std::max(err, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return err;
}

template <class T>
bool bit_equal(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

// Tiny attention configuration used across module tests: patch 2, window 2,
// shift 1, 2 heads, 8-wide embedding.
inline spectracast::swin::SwinConfig tiny_swin() {
  spectracast::swin::SwinConfig cfg;
  cfg.patch_h = cfg.patch_w = 2;
  cfg.window = 2;
  cfg.shift = 1;
  cfg.heads = 2;
  cfg.embed_dim = 8;
  cfg.mlp_ratio = 2;
  return cfg;
}

}  // namespace testutil
