// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Recurrent cells over [B, C, M, N] fields. The spatiotemporal cell keeps a
// per-layer temporal memory C and a layer-crossing memory M; the gate
// transforms are windowed-attention stacks (vitlstm) or same-padded
// convolutions (stlstm) over one shared skeleton. convlstm is the plain
// convolutional LSTM baseline without the M memory.

#pragma once

#include <string>

#include "spectracast/ops.hpp"
#include "spectracast/swin.hpp"

namespace spectracast::cells {

template <class T>
struct CellState {
  Tensor<T> h;  // hidden state
  Tensor<T> c;  // temporal memory
  Tensor<T> m;  // spatiotemporal memory (layer-crossing)
};

// Post-activation gate values, captured when a trace sink is supplied.
template <class T>
struct CellTrace {
  Tensor<T> g, i, f, gp, ip, fp, o;
};

// ---------------------------------------------------------------------------
// Gate transforms
// ---------------------------------------------------------------------------

template <class T>
struct SwinGate {
  swin::StackParams<T> stack;

  Tensor<T> operator()(const Tensor<T>& x, const swin::SwinConfig& cfg) const {
    return swin::vit(x, cfg, stack);
  }
};

template <class T>
struct ConvGate {
  Tensor<T> w, b;

  Tensor<T> operator()(const Tensor<T>& x, const swin::SwinConfig&) const {
    return conv2d(x, w, b);
  }
};

template <class T, class F>
void visit_gate(SwinGate<T>& g, const std::string& prefix, F&& fn) {
  swin::visit_stack(g.stack, prefix, fn);
}

template <class T, class F>
void visit_gate(ConvGate<T>& g, const std::string& prefix, F&& fn) {
  fn(prefix + ".w", g.w);
  fn(prefix + ".b", g.b);
}

// ---------------------------------------------------------------------------
// Spatiotemporal cell skeleton (shared by vitlstm and stlstm)
// ---------------------------------------------------------------------------

// One transform per occurrence in the cell equations: two per gate g/i/f
// (input and hidden paths), two per primed gate (input and memory paths),
// four in the output gate. No sharing across gates.
template <class T, class Gate>
struct StmCellParams {
  swin::SwinConfig swin_cfg;  // used by SwinGate; carried but unused by ConvGate
  Gate g_x, g_h, i_x, i_h, f_x, f_h;
  Gate gp_x, gp_m, ip_x, ip_m, fp_x, fp_m;
  Gate o_x, o_h, o_c, o_m;
  Tensor<T> b_g, b_i, b_f, b_gp, b_ip, b_fp, b_o;  // per-channel [Ch]
  Tensor<T> fusion_w;                              // 1x1 projection [Ch, 2Ch, 1, 1]
};

template <class T>
using VitLstmCellParams = StmCellParams<T, SwinGate<T>>;
template <class T>
using StLstmCellParams = StmCellParams<T, ConvGate<T>>;

namespace detail {

// [Ch] -> [Ch,1,1] so per-channel biases broadcast over [B,Ch,M,N].
template <class T>
Tensor<T> channel_bias(const Tensor<T>& b) {
  return reshape(b, {b.size(), 1, 1});
}

template <class T>
void check_field_shapes(const Tensor<T>& x, const CellState<T>& prev, const Tensor<T>& m_in) {
  if (x.rank() != 4) throw DimensionError("cell: input must be [B,C,M,N]");
  const auto& hs = prev.h.shape();
  if (prev.c.shape() != hs || m_in.shape() != hs) {
    throw DimensionError("cell: state tensors must share one shape, got h=" + shape_str(hs) +
                         " c=" + shape_str(prev.c.shape()) + " m=" + shape_str(m_in.shape()));
  }
  if (hs[0] != x.shape()[0] || hs[2] != x.shape()[2] || hs[3] != x.shape()[3]) {
    throw DimensionError("cell: state shape " + shape_str(hs) + " disagrees with input " +
                         shape_str(x.shape()));
  }
}

}  // namespace detail

template <class T, class Gate>
CellState<T> stm_cell(const Tensor<T>& x, const CellState<T>& prev, const Tensor<T>& m_in,
                      const StmCellParams<T, Gate>& p, CellTrace<T>* trace = nullptr) {
  detail::check_field_shapes(x, prev, m_in);
  const auto& cfg = p.swin_cfg;

  auto g = tanh(add(add(p.g_x(x, cfg), p.g_h(prev.h, cfg)), detail::channel_bias(p.b_g)));
  auto i = sigmoid(add(add(p.i_x(x, cfg), p.i_h(prev.h, cfg)), detail::channel_bias(p.b_i)));
  auto f = sigmoid(add(add(p.f_x(x, cfg), p.f_h(prev.h, cfg)), detail::channel_bias(p.b_f)));
  auto c_new = add(mul(f, prev.c), mul(i, g));

  auto gp = tanh(add(add(p.gp_x(x, cfg), p.gp_m(m_in, cfg)), detail::channel_bias(p.b_gp)));
  auto ip = sigmoid(add(add(p.ip_x(x, cfg), p.ip_m(m_in, cfg)), detail::channel_bias(p.b_ip)));
  auto fp = sigmoid(add(add(p.fp_x(x, cfg), p.fp_m(m_in, cfg)), detail::channel_bias(p.b_fp)));
  auto m_new = add(mul(fp, m_in), mul(ip, gp));

  auto o = sigmoid(add(add(add(add(p.o_x(x, cfg), p.o_h(prev.h, cfg)), p.o_c(c_new, cfg)),
                           p.o_m(m_new, cfg)),
                       detail::channel_bias(p.b_o)));
  auto h_new = mul(o, tanh(conv2d(concat(c_new, m_new, 1), p.fusion_w)));

  if (trace) *trace = {g, i, f, gp, ip, fp, o};
  return {h_new, c_new, m_new};
}

template <class T>
CellState<T> vitlstm_cell(const Tensor<T>& x, const CellState<T>& prev, const Tensor<T>& m_in,
                          const VitLstmCellParams<T>& p, CellTrace<T>* trace = nullptr) {
  return stm_cell(x, prev, m_in, p, trace);
}

template <class T>
CellState<T> stlstm_cell(const Tensor<T>& x, const CellState<T>& prev, const Tensor<T>& m_in,
                         const StLstmCellParams<T>& p, CellTrace<T>* trace = nullptr) {
  return stm_cell(x, prev, m_in, p, trace);
}

// ---------------------------------------------------------------------------
// Convolutional LSTM baseline (no spatiotemporal memory)
// ---------------------------------------------------------------------------

template <class T>
struct ConvLstmParams {
  // Bias-free convolutions; each gate carries one per-channel bias.
  Tensor<T> wi_x, wi_h, wf_x, wf_h, wg_x, wg_h, wo_x, wo_h;
  Tensor<T> b_i, b_f, b_g, b_o;  // [Ch]
};

template <class T>
struct ConvLstmOut {
  Tensor<T> h, c;
};

template <class T>
ConvLstmOut<T> convlstm_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                             const ConvLstmParams<T>& p, CellTrace<T>* trace = nullptr) {
  if (x.rank() != 4 || h_prev.shape() != c_prev.shape()) {
    throw DimensionError("convlstm_cell: expected [B,C,M,N] input and matching h/c states");
  }
  auto bias = [](const Tensor<T>& b) { return detail::channel_bias(b); };
  auto i = sigmoid(add(add(conv2d(x, p.wi_x), conv2d(h_prev, p.wi_h)), bias(p.b_i)));
  auto f = sigmoid(add(add(conv2d(x, p.wf_x), conv2d(h_prev, p.wf_h)), bias(p.b_f)));
  auto g = tanh(add(add(conv2d(x, p.wg_x), conv2d(h_prev, p.wg_h)), bias(p.b_g)));
  auto o = sigmoid(add(add(conv2d(x, p.wo_x), conv2d(h_prev, p.wo_h)), bias(p.b_o)));
  auto c_new = add(mul(f, c_prev), mul(i, g));
  auto h_new = mul(o, tanh(c_new));
  if (trace) *trace = {g, i, f, Tensor<T>(), Tensor<T>(), Tensor<T>(), o};
  return {h_new, c_new};
}

// ---------------------------------------------------------------------------
// Initialization and naming
// ---------------------------------------------------------------------------

template <class T>
ConvGate<T> init_conv_gate(int c_in, int c_out, int kernel, Rng& rng) {
  ConvGate<T> g;
  g.w = Tensor<T>::randn_trunc(
      {std::size_t(c_out), std::size_t(c_in), std::size_t(kernel), std::size_t(kernel)}, rng,
      0.02);
  g.b = Tensor<T>::zeros({std::size_t(c_out)});
  return g;
}

template <class T>
VitLstmCellParams<T> init_vitlstm_cell(const swin::SwinConfig& cfg, int c_in, int c_hidden,
                                       Rng& rng) {
  VitLstmCellParams<T> p;
  p.swin_cfg = cfg;
  auto from_x = [&] { return SwinGate<T>{swin::init_stack<T>(cfg, c_in, c_hidden, rng)}; };
  auto from_state = [&] { return SwinGate<T>{swin::init_stack<T>(cfg, c_hidden, c_hidden, rng)}; };
  p.g_x = from_x(); p.g_h = from_state();
  p.i_x = from_x(); p.i_h = from_state();
  p.f_x = from_x(); p.f_h = from_state();
  p.gp_x = from_x(); p.gp_m = from_state();
  p.ip_x = from_x(); p.ip_m = from_state();
  p.fp_x = from_x(); p.fp_m = from_state();
  p.o_x = from_x(); p.o_h = from_state(); p.o_c = from_state(); p.o_m = from_state();
  const std::size_t ch = c_hidden;
  for (Tensor<T>* b : {&p.b_g, &p.b_i, &p.b_f, &p.b_gp, &p.b_ip, &p.b_fp, &p.b_o}) {
    *b = Tensor<T>::zeros({ch});
  }
  p.fusion_w = Tensor<T>::randn_trunc({ch, 2 * ch, 1, 1}, rng, 0.02);
  return p;
}

template <class T>
StLstmCellParams<T> init_stlstm_cell(int kernel, int c_in, int c_hidden, Rng& rng,
                                     const swin::SwinConfig& cfg = {}) {
  if (kernel % 2 == 0) throw ConfigError("stlstm: conv kernel must be odd");
  StLstmCellParams<T> p;
  p.swin_cfg = cfg;
  auto from_x = [&] { return init_conv_gate<T>(c_in, c_hidden, kernel, rng); };
  auto from_state = [&] { return init_conv_gate<T>(c_hidden, c_hidden, kernel, rng); };
  p.g_x = from_x(); p.g_h = from_state();
  p.i_x = from_x(); p.i_h = from_state();
  p.f_x = from_x(); p.f_h = from_state();
  p.gp_x = from_x(); p.gp_m = from_state();
  p.ip_x = from_x(); p.ip_m = from_state();
  p.fp_x = from_x(); p.fp_m = from_state();
  p.o_x = from_x(); p.o_h = from_state(); p.o_c = from_state(); p.o_m = from_state();
  const std::size_t ch = c_hidden;
  for (Tensor<T>* b : {&p.b_g, &p.b_i, &p.b_f, &p.b_gp, &p.b_ip, &p.b_fp, &p.b_o}) {
    *b = Tensor<T>::zeros({ch});
  }
  p.fusion_w = Tensor<T>::randn_trunc({ch, 2 * ch, 1, 1}, rng, 0.02);
  return p;
}

template <class T>
ConvLstmParams<T> init_convlstm_cell(int kernel, int c_in, int c_hidden, Rng& rng) {
  if (kernel % 2 == 0) throw ConfigError("convlstm: conv kernel must be odd");
  ConvLstmParams<T> p;
  auto conv = [&](int ci) {
    return Tensor<T>::randn_trunc(
        {std::size_t(c_hidden), std::size_t(ci), std::size_t(kernel), std::size_t(kernel)}, rng,
        0.02);
  };
  p.wi_x = conv(c_in); p.wi_h = conv(c_hidden);
  p.wf_x = conv(c_in); p.wf_h = conv(c_hidden);
  p.wg_x = conv(c_in); p.wg_h = conv(c_hidden);
  p.wo_x = conv(c_in); p.wo_h = conv(c_hidden);
  for (Tensor<T>* b : {&p.b_i, &p.b_f, &p.b_g, &p.b_o}) {
    *b = Tensor<T>::zeros({std::size_t(c_hidden)});
  }
  return p;
}

template <class T, class Gate, class F>
void visit_stm_cell(StmCellParams<T, Gate>& p, const std::string& prefix, F&& fn) {
  visit_gate(p.g_x, prefix + ".g_x", fn);
  visit_gate(p.g_h, prefix + ".g_h", fn);
  visit_gate(p.i_x, prefix + ".i_x", fn);
  visit_gate(p.i_h, prefix + ".i_h", fn);
  visit_gate(p.f_x, prefix + ".f_x", fn);
  visit_gate(p.f_h, prefix + ".f_h", fn);
  visit_gate(p.gp_x, prefix + ".gp_x", fn);
  visit_gate(p.gp_m, prefix + ".gp_m", fn);
  visit_gate(p.ip_x, prefix + ".ip_x", fn);
  visit_gate(p.ip_m, prefix + ".ip_m", fn);
  visit_gate(p.fp_x, prefix + ".fp_x", fn);
  visit_gate(p.fp_m, prefix + ".fp_m", fn);
  visit_gate(p.o_x, prefix + ".o_x", fn);
  visit_gate(p.o_h, prefix + ".o_h", fn);
  visit_gate(p.o_c, prefix + ".o_c", fn);
  visit_gate(p.o_m, prefix + ".o_m", fn);
  fn(prefix + ".bias.g", p.b_g);
  fn(prefix + ".bias.i", p.b_i);
  fn(prefix + ".bias.f", p.b_f);
  fn(prefix + ".bias.gp", p.b_gp);
  fn(prefix + ".bias.ip", p.b_ip);
  fn(prefix + ".bias.fp", p.b_fp);
  fn(prefix + ".bias.o", p.b_o);
  fn(prefix + ".fusion.w", p.fusion_w);
}

template <class T, class F>
void visit_convlstm_cell(ConvLstmParams<T>& p, const std::string& prefix, F&& fn) {
  fn(prefix + ".i_x.w", p.wi_x);
  fn(prefix + ".i_h.w", p.wi_h);
  fn(prefix + ".f_x.w", p.wf_x);
  fn(prefix + ".f_h.w", p.wf_h);
  fn(prefix + ".g_x.w", p.wg_x);
  fn(prefix + ".g_h.w", p.wg_h);
  fn(prefix + ".o_x.w", p.wo_x);
  fn(prefix + ".o_h.w", p.wo_h);
  fn(prefix + ".bias.i", p.b_i);
  fn(prefix + ".bias.f", p.b_f);
  fn(prefix + ".bias.g", p.b_g);
  fn(prefix + ".bias.o", p.b_o);
}

}  // namespace spectracast::cells
