// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable kernels over Tensor<T>. Every kernel uses fixed loop
// orders, so results (and gradient accumulation) are bit-reproducible
// run to run for a given scalar type.

#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "spectracast/tensor.hpp"

namespace spectracast {

// ===========================================================================
// Broadcasting helpers (numpy-style, right-aligned)
// ===========================================================================

namespace detail {

struct BcastPlan {
  Shape out;
  // Strides into each input, expressed per out-axis; 0 where broadcast.
  std::vector<std::size_t> a_stride, b_stride;
};

inline BcastPlan make_bcast_plan(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  BcastPlan plan;
  plan.out.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t ae = d < rank - a.size() ? 1 : a[d - (rank - a.size())];
    const std::size_t be = d < rank - b.size() ? 1 : b[d - (rank - b.size())];
    if (ae != be && ae != 1 && be != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcast-compatible");
    }
    plan.out[d] = std::max(ae, be);
  }
  auto strides_for = [&](const Shape& s) {
    std::vector<std::size_t> strides(rank, 0);
    std::size_t acc = 1;
    for (std::size_t d = s.size(); d-- > 0;) {
      const std::size_t out_d = d + (rank - s.size());
      strides[out_d] = (s[d] == 1 && plan.out[out_d] != 1) ? 0 : acc;
      acc *= s[d];
    }
    return strides;
  };
  plan.a_stride = strides_for(a);
  plan.b_stride = strides_for(b);
  return plan;
}

// Odometer walk over `out_shape`; fn(out_flat, a_off, b_off) once per element
// in row-major order.
template <class F>
void for_each_bcast(const Shape& out_shape, const std::vector<std::size_t>& a_stride,
                    const std::vector<std::size_t>& b_stride, F&& fn) {
  const std::size_t rank = out_shape.size();
  const std::size_t n = shape_numel(out_shape);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t a_off = 0, b_off = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    fn(flat, a_off, b_off);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      a_off += a_stride[d];
      b_off += b_stride[d];
      if (idx[d] < out_shape[d]) break;
      a_off -= a_stride[d] * out_shape[d];
      b_off -= b_stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

// Same walk with the innermost axis hoisted into the callback:
// fn(out_base, a_base, b_base, inner_len, a_inner_stride, b_inner_stride).
template <class F>
void for_each_bcast_rows(const Shape& out_shape, const std::vector<std::size_t>& a_stride,
                         const std::vector<std::size_t>& b_stride, F&& fn) {
  const std::size_t rank = out_shape.size();
  if (rank == 0) {
    fn(std::size_t(0), std::size_t(0), std::size_t(0), std::size_t(1), std::size_t(0),
       std::size_t(0));
    return;
  }
  const std::size_t inner = out_shape[rank - 1];
  const std::size_t a_in = a_stride[rank - 1], b_in = b_stride[rank - 1];
  const std::size_t n_rows = shape_numel(out_shape) / inner;
  std::vector<std::size_t> idx(rank - 1, 0);
  std::size_t a_off = 0, b_off = 0;
  for (std::size_t row = 0; row < n_rows; ++row) {
    fn(row * inner, a_off, b_off, inner, a_in, b_in);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      a_off += a_stride[d];
      b_off += b_stride[d];
      if (idx[d] < out_shape[d]) break;
      a_off -= a_stride[d] * out_shape[d];
      b_off -= b_stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

// True when b (right-aligned, leading 1s stripped) is an exact suffix of the
// out shape, i.e. `out[i] op= b[i % b_numel]` tiles correctly.
inline bool is_suffix_broadcast(const Shape& out, const Shape& b) {
  if (b.size() > out.size()) return false;
  std::size_t lead = 0;
  while (lead < b.size() && b[lead] == 1) ++lead;
  const std::size_t tail = b.size() - lead;
  for (std::size_t i = 0; i < tail; ++i) {
    if (b[lead + i] != out[out.size() - tail + i]) return false;
  }
  return true;
}

}  // namespace detail

// ===========================================================================
// Elementwise binary ops (broadcasting)
// ===========================================================================

namespace detail {

template <class T, class Fwd, class BwdA, class BwdB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, BwdA bwd_a, BwdB bwd_b,
                    const char* name) {
  if (a.shape() == b.shape()) {
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return make_op<T>(
        a.shape(), std::move(out), {a, b},
        [bwd_a, bwd_b](Node<T>& n) {
          auto& pa = *n.parents[0];
          auto& pb = *n.parents[1];
          if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
              pa.grad[i] += bwd_a(n.grad[i], pa.value[i], pb.value[i]);
            }
          }
          if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
              pb.grad[i] += bwd_b(n.grad[i], pa.value[i], pb.value[i]);
            }
          }
        },
        name);
  }

  // Suffix broadcast (bias-add pattern): b tiles the trailing axes of a.
  if (is_suffix_broadcast(a.shape(), b.shape())) {
    const auto av = a.data();
    const auto bv = b.data();
    const std::size_t bs = bv.size();
    std::vector<T> out(av.size());
    for (std::size_t base = 0; base < out.size(); base += bs) {
      for (std::size_t j = 0; j < bs; ++j) out[base + j] = fwd(av[base + j], bv[j]);
    }
    return make_op<T>(
        a.shape(), std::move(out), {a, b},
        [bwd_a, bwd_b, bs](Node<T>& n) {
          auto& pa = *n.parents[0];
          auto& pb = *n.parents[1];
          if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t base = 0; base < n.grad.size(); base += bs) {
              for (std::size_t j = 0; j < bs; ++j) {
                pa.grad[base + j] += bwd_a(n.grad[base + j], pa.value[base + j], pb.value[j]);
              }
            }
          }
          if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t base = 0; base < n.grad.size(); base += bs) {
              for (std::size_t j = 0; j < bs; ++j) {
                pb.grad[j] += bwd_b(n.grad[base + j], pa.value[base + j], pb.value[j]);
              }
            }
          }
        },
        name);
  }

  auto plan = std::make_shared<BcastPlan>(make_bcast_plan(a.shape(), b.shape(), name));
  std::vector<T> out(shape_numel(plan->out));
  {
    const auto av = a.data();
    const auto bv = b.data();
    for_each_bcast_rows(plan->out, plan->a_stride, plan->b_stride,
                        [&](std::size_t o, std::size_t i, std::size_t j, std::size_t len,
                            std::size_t ai, std::size_t bi) {
                          for (std::size_t t = 0; t < len; ++t) {
                            out[o + t] = fwd(av[i + t * ai], bv[j + t * bi]);
                          }
                        });
  }
  return make_op<T>(
      plan->out, std::move(out), {a, b},
      [plan, bwd_a, bwd_b](Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for_each_bcast_rows(plan->out, plan->a_stride, plan->b_stride,
                            [&](std::size_t o, std::size_t i, std::size_t j, std::size_t len,
                                std::size_t ai, std::size_t bi) {
                              for (std::size_t t = 0; t < len; ++t) {
                                if (pa.requires_grad) {
                                  pa.grad[i + t * ai] +=
                                      bwd_a(n.grad[o + t], pa.value[i + t * ai], pb.value[j + t * bi]);
                                }
                                if (pb.requires_grad) {
                                  pb.grad[j + t * bi] +=
                                      bwd_b(n.grad[o + t], pa.value[i + t * ai], pb.value[j + t * bi]);
                                }
                              }
                            });
      },
      name);
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; }, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; }, "sub");
}

// Hadamard product.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; }, "mul");
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <class T>
Tensor<T> scale(const Tensor<T>& x, double c) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  const T tc = static_cast<T>(c);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * tc;
  return make_op<T>(
      x.shape(), std::move(out), {x},
      [tc](detail::Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * tc;
      },
      "scale");
}

// ===========================================================================
// Matrix multiplication (batched, broadcasting leading axes)
// ===========================================================================

namespace detail {

// C[m,n] (+)= A[m,k] * B[k,n]; (i,t,j) order keeps the inner loop unit-stride.
template <class T>
void mm_nn(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c, std::size_t m,
           std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) ci[j] = T(0);
    }
    const T* ai = a + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const T av = ai[t];
      const T* bt = b + t * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

// dB[k,n] += A^T[k,m] * dC[m,n], looping (i,t,j) so accumulation order over
// rows of A is fixed.
template <class T>
void mm_tn_accum(const T* __restrict__ a, const T* __restrict__ dc, T* __restrict__ db,
                 std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* dci = dc + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const T av = ai[t];
      T* dbt = db + t * n;
      for (std::size_t j = 0; j < n; ++j) dbt[j] += av * dci[j];
    }
  }
}

template <class T>
void transpose_2d(const T* __restrict__ src, T* __restrict__ dst, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
  }
}

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(as) + " and " +
                         shape_str(bs));
  }
  const std::size_t m = as[as.size() - 2], k = as[as.size() - 1];
  const std::size_t kb = bs[bs.size() - 2], n = bs[bs.size() - 1];
  if (k != kb) {
    throw DimensionError("matmul: inner extents disagree: " + shape_str(as) + " vs " +
                         shape_str(bs));
  }
  // Shared rank-2 right operand (projection weights): fold every leading
  // axis of `a` into one row block and run a single kernel call.
  if (bs.size() == 2) {
    const std::size_t rows = a.size() / k;
    Shape out_shape = as;
    out_shape.back() = n;
    std::vector<T> out(rows * n);
    detail::mm_nn(a.data().data(), b.data().data(), out.data(), rows, k, n, false);
    return make_op<T>(
        std::move(out_shape), std::move(out), {a, b},
        [rows, k, n](detail::Node<T>& node) {
          auto& pa = *node.parents[0];
          auto& pb = *node.parents[1];
          if (pa.requires_grad) {
            pa.ensure_grad();
            std::vector<T> bt(k * n);
            detail::transpose_2d(pb.value.data(), bt.data(), k, n);
            detail::mm_nn(node.grad.data(), bt.data(), pa.grad.data(), rows, n, k, true);
          }
          if (pb.requires_grad) {
            pb.ensure_grad();
            detail::mm_tn_accum(pa.value.data(), node.grad.data(), pb.grad.data(), rows, k, n);
          }
        },
        "matmul");
  }

  Shape a_batch(as.begin(), as.end() - 2), b_batch(bs.begin(), bs.end() - 2);
  auto plan = std::make_shared<detail::BcastPlan>(
      detail::make_bcast_plan(a_batch, b_batch, "matmul"));
  const std::size_t n_batch = shape_numel(plan->out);
  const std::size_t a_mat = m * k, b_mat = k * n, c_mat = m * n;
  // Batch strides index whole matrices.
  Shape out_shape = plan->out;
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<T> out(n_batch * c_mat);
  {
    const T* av = a.data().data();
    const T* bv = b.data().data();
    if (plan->out.empty()) {
      detail::mm_nn(av, bv, out.data(), m, k, n, false);
    } else {
      detail::for_each_bcast(plan->out, plan->a_stride, plan->b_stride,
                             [&](std::size_t o, std::size_t i, std::size_t j) {
                               detail::mm_nn(av + i * a_mat, bv + j * b_mat, out.data() + o * c_mat,
                                             m, k, n, false);
                             });
    }
  }
  return make_op<T>(
      std::move(out_shape), std::move(out), {a, b},
      [plan, m, k, n, a_mat, b_mat, c_mat](detail::Node<T>& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        const T* dc = node.grad.data();
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        std::vector<T> bt(b_mat);  // scratch transpose of one B matrix
        auto step = [&](std::size_t o, std::size_t i, std::size_t j) {
          if (pa.requires_grad) {
            detail::transpose_2d(pb.value.data() + j * b_mat, bt.data(), k, n);
            detail::mm_nn(dc + o * c_mat, bt.data(), pa.grad.data() + i * a_mat, m, n, k, true);
          }
          if (pb.requires_grad) {
            detail::mm_tn_accum(pa.value.data() + i * a_mat, dc + o * c_mat,
                                pb.grad.data() + j * b_mat, m, k, n);
          }
        };
        if (plan->out.empty()) {
          step(0, 0, 0);
        } else {
          detail::for_each_bcast(plan->out, plan->a_stride, plan->b_stride, step);
        }
      },
      "matmul");
}

// ===========================================================================
// Softmax over the last axis (max-stabilized)
// ===========================================================================

template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("softmax_lastdim: rank-0 input");
  const std::size_t cols = s.back();
  const std::size_t rows = x.size() / cols;
  const auto xv = x.data();
  if (finite_checks_enabled()) {
    for (const T v : xv) {
      if (!std::isfinite(v)) throw NumericError("softmax_lastdim: non-finite input");
    }
  }
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    T* orow = out.data() + r * cols;
    T mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < cols; ++j) orow[j] *= inv;
  }
  return make_op<T>(
      x.shape(), std::move(out), {x},
      [rows, cols](detail::Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* y = n.value.data() + r * cols;
          const T* dy = n.grad.data() + r * cols;
          T dot = T(0);
          for (std::size_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
          T* dx = p.grad.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) dx[j] += (dy[j] - dot) * y[j];
        }
      },
      "softmax_lastdim");
}

// ===========================================================================
// Layer normalization over the last axis
// ===========================================================================

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("layer_norm: rank-0 input");
  const std::size_t cols = s.back();
  if (gamma.rank() != 1 || gamma.size() != cols || beta.rank() != 1 || beta.size() != cols) {
    throw DimensionError("layer_norm: gamma/beta must be rank-1 of extent " + std::to_string(cols) +
                         ", got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.size() / cols;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<T> out(xv.size());
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    T mean = T(0);
    for (std::size_t j = 0; j < cols; ++j) mean += row[j];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      const T d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*inv_std)[r] = inv;
    T* xh = xhat->data() + r * cols;
    T* orow = out.data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      xh[j] = (row[j] - mean) * inv;
      orow[j] = xh[j] * gv[j] + bv[j];
    }
  }
  return make_op<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, cols, xhat, inv_std](detail::Node<T>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        std::vector<T> dyg(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dy = n.grad.data() + r * cols;
          const T* xh = xhat->data() + r * cols;
          if (pg.requires_grad) {
            for (std::size_t j = 0; j < cols; ++j) pg.grad[j] += dy[j] * xh[j];
          }
          if (pb.requires_grad) {
            for (std::size_t j = 0; j < cols; ++j) pb.grad[j] += dy[j];
          }
          if (px.requires_grad) {
            T mean_dyg = T(0), mean_dyg_xh = T(0);
            for (std::size_t j = 0; j < cols; ++j) {
              dyg[j] = dy[j] * pg.value[j];
              mean_dyg += dyg[j];
              mean_dyg_xh += dyg[j] * xh[j];
            }
            mean_dyg /= static_cast<T>(cols);
            mean_dyg_xh /= static_cast<T>(cols);
            const T inv = (*inv_std)[r];
            T* dx = px.grad.data() + r * cols;
            for (std::size_t j = 0; j < cols; ++j) {
              dx[j] += (dyg[j] - mean_dyg - xh[j] * mean_dyg_xh) * inv;
            }
          }
        }
      },
      "layer_norm");
}

// ===========================================================================
// Activations
// ===========================================================================

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xv[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return make_op<T>(
      x.shape(), std::move(out), {x},
      [](detail::Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          const T y = n.value[i];
          p.grad[i] += n.grad[i] * y * (T(1) - y);
        }
      },
      "sigmoid");
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return make_op<T>(
      x.shape(), std::move(out), {x},
      [](detail::Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          const T y = n.value[i];
          p.grad[i] += n.grad[i] * (T(1) - y * y);
        }
      },
      "tanh");
}

// Exact-erf GELU: x * Phi(x).
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xv[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * static_cast<T>(M_SQRT1_2)));
  }
  return make_op<T>(
      x.shape(), std::move(out), {x},
      [](detail::Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        constexpr T inv_sqrt_2pi = T(0.3989422804014326779);
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          const T v = p.value[i];
          const T phi_cdf = T(0.5) * (T(1) + std::erf(v * static_cast<T>(M_SQRT1_2)));
          const T phi_pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
          p.grad[i] += n.grad[i] * (phi_cdf + v * phi_pdf);
        }
      },
      "gelu");
}

// ===========================================================================
// 2-D convolution (cross-correlation, zero same-padding, odd kernels)
// ===========================================================================

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4) {
    throw DimensionError("conv2d: expected x [B,Cin,H,W] and w [Cout,Cin,kh,kw], got " +
                         shape_str(xs) + " and " + shape_str(ws));
  }
  const std::size_t B = xs[0], cin = xs[1], H = xs[2], W = xs[3];
  const std::size_t cout = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != cin) {
    throw DimensionError("conv2d: input channels disagree: " + shape_str(xs) + " vs " +
                         shape_str(ws));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("conv2d: same-padding requires odd kernel extents, got " + shape_str(ws));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.size() != cout)) {
    throw DimensionError("conv2d: bias must be rank-1 of extent " + std::to_string(cout));
  }
  const std::size_t ph = kh / 2, pw = kw / 2;
  const auto xv = x.data();
  const auto wv = w.data();
  std::vector<T> out(B * cout * H * W);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const T b0 = has_bias ? bias.data()[co] : T(0);
      T* orow = out.data() + (b * cout + co) * H * W;
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t xx = 0; xx < W; ++xx) {
          T acc = b0;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* xch = xv.data() + (b * cin + ci) * H * W;
            const T* wch = wv.data() + (co * cin + ci) * kh * kw;
            for (std::size_t dy = 0; dy < kh; ++dy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) -
                                        static_cast<std::ptrdiff_t>(ph);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + dx) -
                                          static_cast<std::ptrdiff_t>(pw);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += xch[iy * W + ix] * wch[dy * kw + dx];
              }
            }
          }
          orow[y * W + xx] = acc;
        }
      }
    }
  }
  auto backward = [B, cin, cout, H, W, kh, kw, ph, pw, has_bias](detail::Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pw_ = *n.parents[1];
    detail::Node<T>* pb = n.parents.size() > 2 ? n.parents[2].get() : nullptr;
    if (px.requires_grad) px.ensure_grad();
    if (pw_.requires_grad) pw_.ensure_grad();
    if (pb && pb->requires_grad) pb->ensure_grad();
    const T* dout = n.grad.data();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t co = 0; co < cout; ++co) {
        const T* drow = dout + (b * cout + co) * H * W;
        if (pb && pb->requires_grad) {
          T acc = T(0);
          for (std::size_t i = 0; i < H * W; ++i) acc += drow[i];
          pb->grad[co] += acc;
        }
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T* xch = px.value.data() + (b * cin + ci) * H * W;
          const T* wch = pw_.value.data() + (co * cin + ci) * kh * kw;
          T* dxch = px.requires_grad ? px.grad.data() + (b * cin + ci) * H * W : nullptr;
          T* dwch = pw_.requires_grad ? pw_.grad.data() + (co * cin + ci) * kh * kw : nullptr;
          for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t xx = 0; xx < W; ++xx) {
              const T g = drow[y * W + xx];
              if (g == T(0)) continue;
              for (std::size_t dy = 0; dy < kh; ++dy) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) -
                                          static_cast<std::ptrdiff_t>(ph);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t dx = 0; dx < kw; ++dx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + dx) -
                                            static_cast<std::ptrdiff_t>(pw);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                  if (dxch) dxch[iy * W + ix] += g * wch[dy * kw + dx];
                  if (dwch) dwch[dy * kw + dx] += g * xch[iy * W + ix];
                }
              }
            }
          }
        }
      }
    }
  };
  Shape out_shape{B, cout, H, W};
  if (has_bias) {
    return make_op<T>(std::move(out_shape), std::move(out), {x, w, bias}, std::move(backward),
                      "conv2d");
  }
  return make_op<T>(std::move(out_shape), std::move(out), {x, w}, std::move(backward), "conv2d");
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w) {
  return conv2d(x, w, Tensor<T>());
}

// ===========================================================================
// Reductions
// ===========================================================================

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto xv = x.data();
  T acc = T(0);
  for (const T v : xv) acc += v;
  return make_op<T>(
      {1}, {acc}, {x},
      [](detail::Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const T g = n.grad[0];
        for (auto& gv : p.grad) gv += g;
      },
      "sum");
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

// ===========================================================================
// Shape ops
// ===========================================================================

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  check_shape_valid(new_shape, "reshape");
  if (shape_numel(new_shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_op<T>(
      std::move(new_shape), std::move(out), {x},
      [](detail::Node<T>& n) { n.parents[0]->accumulate_grad(n.grad); }, "reshape");
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, std::vector<std::size_t> axes) {
  const Shape& s = x.shape();
  if (axes.size() != s.size()) throw DimensionError("permute: axes rank mismatch");
  std::vector<bool> used(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t d = 0; d < axes.size(); ++d) {
    if (axes[d] >= s.size() || used[axes[d]]) throw DimensionError("permute: invalid axes");
    used[axes[d]] = true;
    out_shape[d] = s[axes[d]];
  }
  // Input strides per output axis.
  std::vector<std::size_t> in_strides(s.size(), 1);
  for (std::size_t d = s.size() - 1; d-- > 0;) in_strides[d] = in_strides[d + 1] * s[d + 1];
  auto strides = std::make_shared<std::vector<std::size_t>>(s.size());
  for (std::size_t d = 0; d < axes.size(); ++d) (*strides)[d] = in_strides[axes[d]];

  const auto xv = x.data();
  std::vector<T> out(xv.size());
  auto shp = std::make_shared<Shape>(out_shape);
  {
    std::vector<std::size_t> zero(s.size(), 0);
    detail::for_each_bcast_rows(out_shape, *strides, zero,
                                [&](std::size_t o, std::size_t i, std::size_t, std::size_t len,
                                    std::size_t ai, std::size_t) {
                                  for (std::size_t t = 0; t < len; ++t) out[o + t] = xv[i + t * ai];
                                });
  }
  return make_op<T>(
      std::move(out_shape), std::move(out), {x},
      [strides, shp](detail::Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        std::vector<std::size_t> zero(strides->size(), 0);
        detail::for_each_bcast_rows(*shp, *strides, zero,
                                    [&](std::size_t o, std::size_t i, std::size_t, std::size_t len,
                                        std::size_t ai, std::size_t) {
                                      for (std::size_t t = 0; t < len; ++t) {
                                        p.grad[i + t * ai] += n.grad[o + t];
                                      }
                                    });
      },
      "permute");
}

// Gather along one axis: out[..., q, ...] = x[..., map[q], ...]. The map may
// repeat indices (grad scatter-adds) — permutations round-trip bit-exactly.
template <class T>
Tensor<T> gather_axis(const Tensor<T>& x, std::size_t axis,
                      std::shared_ptr<const std::vector<std::size_t>> map) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("gather_axis: axis out of range");
  const std::size_t extent = s[axis];
  for (const auto m : *map) {
    if (m >= extent) throw DimensionError("gather_axis: map index out of range");
  }
  std::size_t lead = 1, trail = 1;
  for (std::size_t d = 0; d < axis; ++d) lead *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) trail *= s[d];
  Shape out_shape = s;
  out_shape[axis] = map->size();
  const std::size_t q = map->size();
  const auto xv = x.data();
  std::vector<T> out(lead * q * trail);
  if (trail == 1) {
    for (std::size_t a = 0; a < lead; ++a) {
      const T* src = xv.data() + a * extent;
      T* dst = out.data() + a * q;
      for (std::size_t i = 0; i < q; ++i) dst[i] = src[(*map)[i]];
    }
  } else {
    for (std::size_t a = 0; a < lead; ++a) {
      for (std::size_t i = 0; i < q; ++i) {
        const T* src = xv.data() + (a * extent + (*map)[i]) * trail;
        T* dst = out.data() + (a * q + i) * trail;
        std::memcpy(dst, src, trail * sizeof(T));
      }
    }
  }
  return make_op<T>(
      std::move(out_shape), std::move(out), {x},
      [map, lead, trail, extent, q](detail::Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t a = 0; a < lead; ++a) {
          for (std::size_t i = 0; i < q; ++i) {
            T* dst = p.grad.data() + (a * extent + (*map)[i]) * trail;
            const T* g = n.grad.data() + (a * q + i) * trail;
            for (std::size_t t = 0; t < trail; ++t) dst[t] += g[t];
          }
        }
      },
      "gather_axis");
}

template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != bs.size() || axis >= as.size()) {
    throw DimensionError("concat: rank mismatch or bad axis");
  }
  for (std::size_t d = 0; d < as.size(); ++d) {
    if (d != axis && as[d] != bs[d]) {
      throw DimensionError("concat: shapes " + shape_str(as) + " and " + shape_str(bs) +
                           " differ off-axis");
    }
  }
  Shape out_shape = as;
  out_shape[axis] += bs[axis];
  std::size_t lead = 1, trail = 1;
  for (std::size_t d = 0; d < axis; ++d) lead *= as[d];
  for (std::size_t d = axis + 1; d < as.size(); ++d) trail *= as[d];
  const std::size_t ae = as[axis], be = bs[axis];
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(lead * (ae + be) * trail);
  for (std::size_t l = 0; l < lead; ++l) {
    std::memcpy(out.data() + l * (ae + be) * trail, av.data() + l * ae * trail,
                ae * trail * sizeof(T));
    std::memcpy(out.data() + (l * (ae + be) + ae) * trail, bv.data() + l * be * trail,
                be * trail * sizeof(T));
  }
  return make_op<T>(
      std::move(out_shape), std::move(out), {a, b},
      [lead, trail, ae, be](detail::Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::size_t l = 0; l < lead; ++l) {
          const T* g0 = n.grad.data() + l * (ae + be) * trail;
          if (pa.requires_grad) {
            T* dst = pa.grad.data() + l * ae * trail;
            for (std::size_t i = 0; i < ae * trail; ++i) dst[i] += g0[i];
          }
          if (pb.requires_grad) {
            T* dst = pb.grad.data() + l * be * trail;
            const T* g1 = g0 + ae * trail;
            for (std::size_t i = 0; i < be * trail; ++i) dst[i] += g1[i];
          }
        }
      },
      "concat");
}

// Inference-only clamp to [0,1]; not differentiable by design.
template <class T>
Tensor<T> clamp01_eval(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::min(T(1), std::max(T(0), v));
  return Tensor<T>::from_data(x.shape(), std::move(out));
}

}  // namespace spectracast
