// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// The windowed self-attention stack used inside every recurrent gate:
// patch embedding, two pre-norm attention blocks (plain windows, then
// cyclically shifted windows with a cross-region mask), and a learned
// projection back to the input resolution.

#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>

#include "spectracast/ops.hpp"
#include "spectracast/rng.hpp"
#include "spectracast/tensor.hpp"

namespace spectracast::swin {

struct SwinConfig {
  int patch_h = 4;
  int patch_w = 4;
  int window = 4;   // tokens per window side
  int shift = 2;    // cyclic shift of the second block, in tokens
  int heads = 8;
  int embed_dim = 32;
  int mlp_ratio = 4;

  void validate(int rows, int cols) const {
    if (patch_h < 1 || patch_w < 1 || window < 1 || heads < 1 || embed_dim < 1 || mlp_ratio < 1) {
      throw ConfigError("swin: all extents must be positive");
    }
    if (rows % patch_h != 0 || cols % patch_w != 0) {
      throw ConfigError("swin: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " not divisible by patch " + std::to_string(patch_h) + "x" +
                        std::to_string(patch_w));
    }
    const int gr = rows / patch_h, gc = cols / patch_w;
    if (gr % window != 0 || gc % window != 0) {
      throw ConfigError("swin: token grid " + std::to_string(gr) + "x" + std::to_string(gc) +
                        " not divisible by window " + std::to_string(window));
    }
    if (shift < 0 || shift >= window) {
      throw ConfigError("swin: shift must satisfy 0 <= shift < window");
    }
    if (embed_dim % heads != 0) {
      throw ConfigError("swin: embed_dim " + std::to_string(embed_dim) +
                        " not divisible by heads " + std::to_string(heads));
    }
  }

  int token_rows(int rows) const { return rows / patch_h; }
  int token_cols(int cols) const { return cols / patch_w; }
};

template <class T>
struct BlockParams {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> wq, bq, wk, bk, wv, bv;
  Tensor<T> proj_w, proj_b;
  Tensor<T> relpos;  // [heads, (2w-1)^2] learned bias table
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> ffn1_w, ffn1_b, ffn2_w, ffn2_b;
};

template <class T>
struct StackParams {
  Tensor<T> embed_w, embed_b;      // [ph*pw*c_in, D], [D]
  std::array<BlockParams<T>, 2> blocks;
  Tensor<T> unembed_w, unembed_b;  // [D, ph*pw*c_out], [ph*pw*c_out]

  int out_channels(const SwinConfig& cfg) const {
    return static_cast<int>(unembed_w.shape()[1]) / (cfg.patch_h * cfg.patch_w);
  }
};

namespace detail_init {
constexpr double kProjStd = 0.02;
}

template <class T>
BlockParams<T> init_block(const SwinConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.embed_dim;
  const std::size_t hidden = d * cfg.mlp_ratio;
  const std::size_t table = std::size_t(2 * cfg.window - 1) * (2 * cfg.window - 1);
  BlockParams<T> b;
  b.ln1_gain = Tensor<T>::full({d}, T(1));
  b.ln1_bias = Tensor<T>::zeros({d});
  b.wq = Tensor<T>::randn_trunc({d, d}, rng, detail_init::kProjStd);
  b.bq = Tensor<T>::zeros({d});
  b.wk = Tensor<T>::randn_trunc({d, d}, rng, detail_init::kProjStd);
  b.bk = Tensor<T>::zeros({d});
  b.wv = Tensor<T>::randn_trunc({d, d}, rng, detail_init::kProjStd);
  b.bv = Tensor<T>::zeros({d});
  b.proj_w = Tensor<T>::randn_trunc({d, d}, rng, detail_init::kProjStd);
  b.proj_b = Tensor<T>::zeros({d});
  b.relpos = Tensor<T>::zeros({std::size_t(cfg.heads), table});
  b.ln2_gain = Tensor<T>::full({d}, T(1));
  b.ln2_bias = Tensor<T>::zeros({d});
  b.ffn1_w = Tensor<T>::randn_trunc({d, hidden}, rng, detail_init::kProjStd);
  b.ffn1_b = Tensor<T>::zeros({hidden});
  b.ffn2_w = Tensor<T>::randn_trunc({hidden, d}, rng, detail_init::kProjStd);
  b.ffn2_b = Tensor<T>::zeros({d});
  return b;
}

template <class T>
StackParams<T> init_stack(const SwinConfig& cfg, int c_in, int c_out, Rng& rng) {
  const std::size_t pd_in = std::size_t(cfg.patch_h) * cfg.patch_w * c_in;
  const std::size_t pd_out = std::size_t(cfg.patch_h) * cfg.patch_w * c_out;
  const std::size_t d = cfg.embed_dim;
  StackParams<T> s;
  s.embed_w = Tensor<T>::randn_trunc({pd_in, d}, rng, detail_init::kProjStd);
  s.embed_b = Tensor<T>::zeros({d});
  s.blocks[0] = init_block<T>(cfg, rng);
  s.blocks[1] = init_block<T>(cfg, rng);
  s.unembed_w = Tensor<T>::randn_trunc({d, pd_out}, rng, detail_init::kProjStd);
  s.unembed_b = Tensor<T>::zeros({pd_out});
  return s;
}

template <class T, class F>
void visit_block(BlockParams<T>& b, const std::string& prefix, F&& fn) {
  fn(prefix + ".ln1.g", b.ln1_gain);
  fn(prefix + ".ln1.b", b.ln1_bias);
  fn(prefix + ".attn.wq", b.wq);
  fn(prefix + ".attn.bq", b.bq);
  fn(prefix + ".attn.wk", b.wk);
  fn(prefix + ".attn.bk", b.bk);
  fn(prefix + ".attn.wv", b.wv);
  fn(prefix + ".attn.bv", b.bv);
  fn(prefix + ".attn.proj.w", b.proj_w);
  fn(prefix + ".attn.proj.b", b.proj_b);
  fn(prefix + ".attn.relpos", b.relpos);
  fn(prefix + ".ln2.g", b.ln2_gain);
  fn(prefix + ".ln2.b", b.ln2_bias);
  fn(prefix + ".ffn.w1", b.ffn1_w);
  fn(prefix + ".ffn.b1", b.ffn1_b);
  fn(prefix + ".ffn.w2", b.ffn2_w);
  fn(prefix + ".ffn.b2", b.ffn2_b);
}

template <class T, class F>
void visit_stack(StackParams<T>& s, const std::string& prefix, F&& fn) {
  fn(prefix + ".embed.w", s.embed_w);
  fn(prefix + ".embed.b", s.embed_b);
  visit_block(s.blocks[0], prefix + ".block0", fn);
  visit_block(s.blocks[1], prefix + ".block1", fn);
  fn(prefix + ".unembed.w", s.unembed_w);
  fn(prefix + ".unembed.b", s.unembed_b);
}

// ---------------------------------------------------------------------------
// Index maps (token-grid permutations, patch flattening)
// ---------------------------------------------------------------------------

namespace maps {

using MapPtr = std::shared_ptr<const std::vector<std::size_t>>;

// (c, m, n) -> token-major flattened patches; q = token * pd + (c, pr, pc).
inline MapPtr patch_flatten(int c, int rows, int cols, int ph, int pw) {
  const int gr = rows / ph, gc = cols / pw;
  const std::size_t pd = std::size_t(ph) * pw * c;
  auto map = std::make_shared<std::vector<std::size_t>>(std::size_t(gr) * gc * pd);
  std::size_t q = 0;
  for (int ti = 0; ti < gr; ++ti) {
    for (int tj = 0; tj < gc; ++tj) {
      for (int ch = 0; ch < c; ++ch) {
        for (int pr = 0; pr < ph; ++pr) {
          for (int pc = 0; pc < pw; ++pc) {
            (*map)[q++] = (std::size_t(ch) * rows + (ti * ph + pr)) * cols + (tj * pw + pc);
          }
        }
      }
    }
  }
  return map;
}

inline MapPtr invert(const MapPtr& fwd) {
  auto inv = std::make_shared<std::vector<std::size_t>>(fwd->size());
  for (std::size_t i = 0; i < fwd->size(); ++i) (*inv)[(*fwd)[i]] = i;
  return inv;
}

// Token positions after partitioning a gr x gc grid into w x w windows.
inline MapPtr window_partition(int gr, int gc, int w) {
  auto map = std::make_shared<std::vector<std::size_t>>(std::size_t(gr) * gc);
  std::size_t q = 0;
  for (int wi = 0; wi < gr / w; ++wi) {
    for (int wj = 0; wj < gc / w; ++wj) {
      for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
          (*map)[q++] = std::size_t(wi * w + i) * gc + (wj * w + j);
        }
      }
    }
  }
  return map;
}

// out[i][j] = in[(i+s) mod gr][(j+s) mod gc]
inline MapPtr cyclic_shift(int gr, int gc, int s_r, int s_c) {
  auto mod = [](int a, int m) { return ((a % m) + m) % m; };
  auto map = std::make_shared<std::vector<std::size_t>>(std::size_t(gr) * gc);
  for (int i = 0; i < gr; ++i) {
    for (int j = 0; j < gc; ++j) {
      (*map)[std::size_t(i) * gc + j] = std::size_t(mod(i + s_r, gr)) * gc + mod(j + s_c, gc);
    }
  }
  return map;
}

// relpos table lookup per ordered token pair inside one window.
inline MapPtr relpos_index(int w) {
  const int span = 2 * w - 1;
  auto map = std::make_shared<std::vector<std::size_t>>(std::size_t(w) * w * w * w);
  std::size_t q = 0;
  for (int ri = 0; ri < w; ++ri) {
    for (int ci = 0; ci < w; ++ci) {
      for (int rj = 0; rj < w; ++rj) {
        for (int cj = 0; cj < w; ++cj) {
          (*map)[q++] = std::size_t(ri - rj + w - 1) * span + (ci - cj + w - 1);
        }
      }
    }
  }
  return map;
}

}  // namespace maps

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// [B, C, M, N] -> [B, (M/ph)(N/pw), D]
template <class T>
Tensor<T> patch_embed(const Tensor<T>& x, const SwinConfig& cfg, const Tensor<T>& embed_w,
                      const Tensor<T>& embed_b) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw DimensionError("patch_embed: expected [B,C,M,N]");
  const int c = static_cast<int>(s[1]), rows = static_cast<int>(s[2]),
            cols = static_cast<int>(s[3]);
  cfg.validate(rows, cols);
  const std::size_t pd = std::size_t(cfg.patch_h) * cfg.patch_w * c;
  if (embed_w.shape()[0] != pd) {
    throw DimensionError("patch_embed: projection expects patch dim " +
                         std::to_string(embed_w.shape()[0]) + ", input provides " +
                         std::to_string(pd));
  }
  const std::size_t n_tokens = std::size_t(cfg.token_rows(rows)) * cfg.token_cols(cols);
  auto flat = reshape(x, {s[0], std::size_t(c) * rows * cols});
  auto gathered = gather_axis(flat, 1, maps::patch_flatten(c, rows, cols, cfg.patch_h, cfg.patch_w));
  auto patches = reshape(gathered, {s[0], n_tokens, pd});
  return add(matmul(patches, embed_w), embed_b);
}

// [B, nT, D] -> [B, C_out, M, N]
template <class T>
Tensor<T> patch_unembed(const Tensor<T>& tokens, const SwinConfig& cfg, const Tensor<T>& unembed_w,
                        const Tensor<T>& unembed_b, int rows, int cols) {
  const Shape& s = tokens.shape();
  if (s.size() != 3) throw DimensionError("patch_unembed: expected [B,nT,D]");
  const std::size_t pd_out = unembed_w.shape()[1];
  const int c_out = static_cast<int>(pd_out) / (cfg.patch_h * cfg.patch_w);
  auto flat_patches = add(matmul(tokens, unembed_w), unembed_b);   // [B, nT, pd_out]
  auto flat = reshape(flat_patches, {s[0], s[1] * pd_out});
  auto scatter = maps::invert(maps::patch_flatten(c_out, rows, cols, cfg.patch_h, cfg.patch_w));
  auto img = gather_axis(flat, 1, scatter);
  return reshape(img, {s[0], std::size_t(c_out), std::size_t(rows), std::size_t(cols)});
}

// [B, gr*gc, D] -> [B, nW, w*w, D]
template <class T>
Tensor<T> window_partition(const Tensor<T>& tokens, int gr, int gc, int w) {
  if (gr % w != 0 || gc % w != 0) {
    throw ConfigError("window_partition: token grid not divisible by window");
  }
  const Shape& s = tokens.shape();
  auto g = gather_axis(tokens, 1, maps::window_partition(gr, gc, w));
  const std::size_t n_windows = std::size_t(gr / w) * (gc / w);
  return reshape(g, {s[0], n_windows, std::size_t(w) * w, s[2]});
}

// [B, nW, w*w, D] -> [B, gr*gc, D]; exact inverse of window_partition.
template <class T>
Tensor<T> window_reverse(const Tensor<T>& windows, int gr, int gc, int w) {
  const Shape& s = windows.shape();
  auto flat = reshape(windows, {s[0], s[1] * s[2], s[3]});
  auto g = gather_axis(flat, 1, maps::invert(maps::window_partition(gr, gc, w)));
  return g;
}

// Cyclic shift of a row-major token grid held as [B, gr*gc, D].
template <class T>
Tensor<T> cyclic_shift(const Tensor<T>& tokens, int gr, int gc, int s_r, int s_c) {
  return gather_axis(tokens, 1, maps::cyclic_shift(gr, gc, s_r, s_c));
}

// Additive attention mask for shifted windows: token pairs whose pre-shift
// region differs get a large negative bias. Shape [nW, 1, w*w, w*w] so it
// broadcasts over batch and heads. s == 0 yields all zeros.
template <class T>
Tensor<T> build_shift_mask(int gr, int gc, int w, int s) {
  const int t = w * w;
  const std::size_t n_windows = std::size_t(gr / w) * (gc / w);
  std::vector<T> mask(n_windows * t * t, T(0));
  if (s > 0) {
    auto region = [&](int coord, int extent) {
      if (coord < extent - w) return 0;
      if (coord < extent - s) return 1;
      return 2;
    };
    // Region label of the token occupying each post-shift position.
    std::vector<int> label(std::size_t(gr) * gc);
    for (int i = 0; i < gr; ++i) {
      for (int j = 0; j < gc; ++j) {
        const int oi = (i + s) % gr, oj = (j + s) % gc;
        label[std::size_t(i) * gc + j] = 3 * region(oi, gr) + region(oj, gc);
      }
    }
    const auto part = maps::window_partition(gr, gc, w);
    for (std::size_t win = 0; win < n_windows; ++win) {
      for (int a = 0; a < t; ++a) {
        const int la = label[(*part)[win * t + a]];
        for (int b = 0; b < t; ++b) {
          const int lb = label[(*part)[win * t + b]];
          if (la != lb) mask[(win * t + a) * t + b] = T(-1e9);
        }
      }
    }
  }
  return Tensor<T>::from_data({n_windows, 1, std::size_t(t), std::size_t(t)}, std::move(mask));
}

// Multi-head self-attention inside each window. `mask` may be undefined.
// When `attn_out` is given it receives the post-softmax attention weights
// [B, nW, heads, w*w, w*w].
template <class T>
Tensor<T> msa_window(const Tensor<T>& windows, const BlockParams<T>& p, const SwinConfig& cfg,
                     const Tensor<T>& mask, Tensor<T>* attn_out = nullptr) {
  const Shape& s = windows.shape();
  if (s.size() != 4) throw DimensionError("msa_window: expected [B,nW,T,D]");
  const std::size_t b = s[0], nw = s[1], t = s[2], d = s[3];
  if (d != std::size_t(cfg.embed_dim) || d % cfg.heads != 0) {
    throw DimensionError("msa_window: token width " + std::to_string(d) +
                         " incompatible with heads " + std::to_string(cfg.heads));
  }
  const std::size_t h = cfg.heads, dh = d / h;
  auto heads_split = [&](const Tensor<T>& x) {
    return permute(reshape(x, {b, nw, t, h, dh}), {0, 1, 3, 2, 4});  // [B,nW,h,T,Dh]
  };
  auto q = heads_split(add(matmul(windows, p.wq), p.bq));
  auto k = heads_split(add(matmul(windows, p.wk), p.bk));
  auto v = heads_split(add(matmul(windows, p.wv), p.bv));
  auto kt = permute(k, {0, 1, 2, 4, 3});  // [B,nW,h,Dh,T]
  auto scores = scale(matmul(q, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
  const int w = cfg.window;
  if (t == std::size_t(w) * w) {
    auto bias = reshape(gather_axis(p.relpos, 1, maps::relpos_index(w)),
                        {h, t, t});  // broadcasts over [B,nW,...]
    scores = add(scores, bias);
  } else if (p.relpos.shape()[1] != 1 || t != 1) {
    throw DimensionError("msa_window: window token count disagrees with config");
  }
  if (mask.defined()) scores = add(scores, mask);
  auto attn = softmax_lastdim(scores);
  if (attn_out) *attn_out = attn;
  auto ctx = matmul(attn, v);                       // [B,nW,h,T,Dh]
  auto merged = reshape(permute(ctx, {0, 1, 3, 2, 4}), {b, nw, t, d});
  return add(matmul(merged, p.proj_w), p.proj_b);
}

namespace detail_block {

template <class T>
Tensor<T> ffn(const Tensor<T>& x, const BlockParams<T>& p) {
  return add(matmul(gelu(add(matmul(x, p.ffn1_w), p.ffn1_b)), p.ffn2_w), p.ffn2_b);
}

// Pre-norm transformer block over a gr x gc token grid.
template <class T>
Tensor<T> block_forward(const Tensor<T>& tokens, int gr, int gc, const SwinConfig& cfg,
                        const BlockParams<T>& p, bool shifted) {
  const int w = cfg.window;
  const int s = shifted ? cfg.shift : 0;
  auto y = layer_norm(tokens, p.ln1_gain, p.ln1_bias);
  if (s > 0) y = cyclic_shift(y, gr, gc, s, s);
  auto win = window_partition(y, gr, gc, w);
  Tensor<T> mask;
  if (s > 0) mask = build_shift_mask<T>(gr, gc, w, s);
  auto att = msa_window(win, p, cfg, mask);
  y = window_reverse(att, gr, gc, w);
  if (s > 0) y = cyclic_shift(y, gr, gc, -s, -s);
  auto x1 = add(tokens, y);
  return add(x1, ffn(layer_norm(x1, p.ln2_gain, p.ln2_bias), p));
}

}  // namespace detail_block

// The full stack: embed -> block (W-MSA) -> block (SW-MSA) -> unembed.
// Shape-preserving in [M, N]; channel count may change between in and out.
template <class T>
Tensor<T> vit(const Tensor<T>& x, const SwinConfig& cfg, const StackParams<T>& p) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw DimensionError("vit: expected [B,C,M,N]");
  const int rows = static_cast<int>(s[2]), cols = static_cast<int>(s[3]);
  cfg.validate(rows, cols);
  const int gr = cfg.token_rows(rows), gc = cfg.token_cols(cols);
  auto tokens = patch_embed(x, cfg, p.embed_w, p.embed_b);
  tokens = detail_block::block_forward(tokens, gr, gc, cfg, p.blocks[0], false);
  tokens = detail_block::block_forward(tokens, gr, gc, cfg, p.blocks[1], true);
  return patch_unembed(tokens, cfg, p.unembed_w, p.unembed_b, rows, cols);
}

}  // namespace spectracast::swin
