// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// L stacked cells with the layer-crossing memory routed bottom-to-top within
// a step and from the top layer back to the bottom layer of the next step.
// The first J steps consume ground-truth frames; later steps consume the
// model's previous prediction. Every step emits a next-frame prediction
// through a 1x1 output head.

#pragma once

#include <cstdint>
#include <type_traits>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "spectracast/adam.hpp"
#include "spectracast/cells.hpp"

namespace spectracast::forecast {

enum class CellKind { ViTLstm, StLstm, ConvLstm };

inline std::string to_string(CellKind k) {
  switch (k) {
    case CellKind::ViTLstm: return "vitlstm";
    case CellKind::StLstm: return "stlstm";
    case CellKind::ConvLstm: return "convlstm";
  }
  return "?";
}

inline CellKind cell_kind_from_string(const std::string& s) {
  if (s == "vitlstm") return CellKind::ViTLstm;
  if (s == "stlstm") return CellKind::StLstm;
  if (s == "convlstm") return CellKind::ConvLstm;
  throw ConfigError("unknown cell kind '" + s + "' (expected vitlstm|stlstm|convlstm)");
}

struct GridSpec {
  int channels = 3;
  int rows = 64;
  int cols = 64;
};

struct ModelConfig {
  CellKind cell = CellKind::ViTLstm;
  int layers = 2;
  GridSpec grid;
  int j = 10;
  int k = 10;
  std::uint64_t seed = 0;
  swin::SwinConfig swin;
  int conv_kernel = 5;
  int hidden_multiplier = 1;

  int hidden_channels() const { return grid.channels * hidden_multiplier; }

  void validate() const {
    if (layers < 1) throw ConfigError("model: layers must be >= 1");
    if (j < 1 || k < 1) throw ConfigError("model: j and k must be >= 1");
    if (grid.channels < 1 || grid.rows < 1 || grid.cols < 1) {
      throw ConfigError("model: grid extents must be positive");
    }
    if (hidden_multiplier < 1) throw ConfigError("model: hidden_multiplier must be >= 1");
    if (cell == CellKind::ViTLstm) {
      swin.validate(grid.rows, grid.cols);
    } else if (conv_kernel < 1 || conv_kernel % 2 == 0) {
      throw ConfigError("model: conv_kernel must be odd and positive");
    }
  }

  // JSON round trip; unknown keys are rejected. Defined in model_config.cpp.
  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& text);
};

template <class T>
using LayerParams = std::variant<cells::VitLstmCellParams<T>, cells::StLstmCellParams<T>,
                                 cells::ConvLstmParams<T>>;

template <class T>
struct Forecaster {
  ModelConfig cfg;
  std::vector<LayerParams<T>> layers;
  Tensor<T> head_w, head_b;  // [C, Ch, 1, 1], [C]
  ParameterSet<T> params;    // name -> the same underlying tensors
};

template <class T>
void rebuild_parameter_index(Forecaster<T>& model) {
  model.params.clear();
  auto reg = [&](const std::string& name, Tensor<T>& t) {
    t.set_requires_grad(true);
    model.params.emplace(name, t);
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    std::visit(
        [&](auto& cell_params) {
          using P = std::decay_t<decltype(cell_params)>;
          if constexpr (std::is_same_v<P, cells::ConvLstmParams<T>>) {
            cells::visit_convlstm_cell(cell_params, prefix, reg);
          } else {
            cells::visit_stm_cell(cell_params, prefix, reg);
          }
        },
        model.layers[l]);
  }
  reg("head.w", model.head_w);
  reg("head.b", model.head_b);
}

// Deterministic construction: same (cfg, seed), same parameter bytes.
template <class T>
Forecaster<T> model_init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(mix_seed(seed, 7));
  Forecaster<T> model;
  model.cfg = cfg;
  const int ch = cfg.hidden_channels();
  for (int l = 0; l < cfg.layers; ++l) {
    const int c_in = l == 0 ? cfg.grid.channels : ch;
    switch (cfg.cell) {
      case CellKind::ViTLstm:
        model.layers.emplace_back(cells::init_vitlstm_cell<T>(cfg.swin, c_in, ch, rng));
        break;
      case CellKind::StLstm:
        model.layers.emplace_back(
            cells::init_stlstm_cell<T>(cfg.conv_kernel, c_in, ch, rng, cfg.swin));
        break;
      case CellKind::ConvLstm:
        model.layers.emplace_back(cells::init_convlstm_cell<T>(cfg.conv_kernel, c_in, ch, rng));
        break;
    }
  }
  model.head_w = Tensor<T>::randn_trunc(
      {std::size_t(cfg.grid.channels), std::size_t(ch), 1, 1}, rng, 0.02);
  model.head_b = Tensor<T>::zeros({std::size_t(cfg.grid.channels)});
  rebuild_parameter_index(model);
  return model;
}

template <class T>
Forecaster<T> model_init(const ModelConfig& cfg) {
  return model_init<T>(cfg, cfg.seed);
}

// 1x1 projection of the top hidden state back to C channels. Values are
// clamped to [0,1] only at inference; the training path stays unclamped so
// the loss sees raw outputs.
template <class T>
Tensor<T> output_head(const Tensor<T>& h, const Tensor<T>& w, const Tensor<T>& b, bool clamp) {
  auto y = conv2d(h, w, b);
  return clamp ? clamp01_eval(y) : y;
}

enum class RolloutMode { Training, Inference };

// Introspection hooks for tests: the memory tensor entering layer 0 at each
// step and the one leaving the top layer.
template <class T>
struct RolloutTrace {
  std::vector<Tensor<T>> m_in_bottom, m_out_top;
  std::vector<cells::CellTrace<T>> cell_traces;  // step-major, then layer
};

// `frames` must supply at least the first J ground-truth frames (extras are
// ignored). Returns the J+K-1 next-frame predictions, of which the last K
// are the forecast.
template <class T>
std::vector<Tensor<T>> model_forward(const Forecaster<T>& model,
                                     std::type_identity_t<std::span<const Tensor<T>>> frames,
                                     RolloutMode mode, RolloutTrace<T>* trace = nullptr) {
  const ModelConfig& cfg = model.cfg;
  if (frames.size() < static_cast<std::size_t>(cfg.j)) {
    throw DimensionError("model_forward: need " + std::to_string(cfg.j) + " context frames, got " +
                         std::to_string(frames.size()));
  }
  const Shape expect{frames[0].shape()[0], std::size_t(cfg.grid.channels),
                     std::size_t(cfg.grid.rows), std::size_t(cfg.grid.cols)};
  for (std::size_t t = 0; t < static_cast<std::size_t>(cfg.j); ++t) {
    if (frames[t].shape() != expect) {
      throw DimensionError("model_forward: frame " + std::to_string(t) + " has shape " +
                           shape_str(frames[t].shape()) + ", expected " + shape_str(expect));
    }
  }
  const std::size_t batch = expect[0];
  const int levels = cfg.layers;
  const Shape state_shape{batch, std::size_t(cfg.hidden_channels()), std::size_t(cfg.grid.rows),
                          std::size_t(cfg.grid.cols)};
  std::vector<cells::CellState<T>> state(levels);
  for (auto& s : state) {
    s.h = Tensor<T>::zeros(state_shape);
    s.c = Tensor<T>::zeros(state_shape);
  }
  Tensor<T> memory = Tensor<T>::zeros(state_shape);

  std::vector<Tensor<T>> preds;
  const int steps = cfg.j + cfg.k - 1;
  for (int t = 0; t < steps; ++t) {
    const Tensor<T> input = t < cfg.j ? frames[t] : preds.back();
    if (trace) trace->m_in_bottom.push_back(memory);
    Tensor<T> x = input;
    for (int l = 0; l < levels; ++l) {
      cells::CellTrace<T> ct;
      cells::CellTrace<T>* ct_ptr = trace ? &ct : nullptr;
      std::visit(
          [&](const auto& cell_params) {
            using P = std::decay_t<decltype(cell_params)>;
            if constexpr (std::is_same_v<P, cells::ConvLstmParams<T>>) {
              auto out = cells::convlstm_cell(x, state[l].h, state[l].c, cell_params, ct_ptr);
              state[l].h = out.h;
              state[l].c = out.c;
            } else {
              auto out = cells::stm_cell(x, state[l], memory, cell_params, ct_ptr);
              state[l] = out;
              memory = out.m;
            }
          },
          model.layers[l]);
      x = state[l].h;
      if (trace) trace->cell_traces.push_back(std::move(ct));
    }
    if (trace) trace->m_out_top.push_back(memory);
    preds.push_back(output_head(x, model.head_w, model.head_b, mode == RolloutMode::Inference));
  }
  return preds;
}

// Convenience: inference forecast of the K future frames only.
template <class T>
std::vector<Tensor<T>> model_predict(const Forecaster<T>& model,
                                     std::type_identity_t<std::span<const Tensor<T>>> context) {
  auto all = model_forward(model, context, RolloutMode::Inference);
  return {all.end() - model.cfg.k, all.end()};
}

// Closed-form learnable-scalar count implied by a config (used to cross-check
// registered parameters).
template <class T>
std::size_t parameter_count(const Forecaster<T>& model) {
  std::size_t n = 0;
  for (const auto& [name, t] : model.params) n += t.size();
  return n;
}

}  // namespace spectracast::forecast
