#include "support/oracles.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace oracles {

namespace {

Vec to_vec(std::span<const double> s) { return Vec(s.begin(), s.end()); }

Vec add_bias_rows(const Vec& x, const Vec& bias, std::size_t rows, std::size_t cols) {
  Vec out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + bias[c];
  }
  return out;
}

double gelu_scalar(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

}  // namespace

Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      c[i * n + j] = acc;
    }
  }
  return c;
}

Vec conv2d(const Vec& x, const Vec& w, const Vec& bias, std::size_t b, std::size_t cin,
           std::size_t h, std::size_t wd, std::size_t cout, std::size_t kh, std::size_t kw) {
  const std::ptrdiff_t ph = kh / 2, pw = kw / 2;
  Vec out(b * cout * h * wd, 0.0);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < wd; ++xx) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t dy = 0; dy < kh; ++dy) {
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - ph;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + dx) - pw;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 ||
                    ix >= static_cast<std::ptrdiff_t>(wd)) {
                  continue;
                }
                acc += x[((bi * cin + ci) * h + iy) * wd + ix] *
                       w[((co * cin + ci) * kh + dy) * kw + dx];
              }
            }
          }
          out[((bi * cout + co) * h + y) * wd + xx] = acc;
        }
      }
    }
  }
  return out;
}

Vec layer_norm(const Vec& x, std::size_t rows, std::size_t cols, const Vec& gamma,
               const Vec& beta, double eps) {
  Vec out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += x[r * cols + c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = x[r * cols + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = (x[r * cols + c] - mean) * inv * gamma[c] + beta[c];
    }
  }
  return out;
}

double idw_cell(const std::vector<spectracast::spectrum::SensorReading>& readings, int row,
                int col, double power) {
  double exact = 0.0;
  int exact_n = 0;
  double wsum = 0.0, vsum = 0.0;
  for (const auto& s : readings) {
    const double d2 =
        double(row - s.row) * (row - s.row) + double(col - s.col) * (col - s.col);
    if (d2 == 0.0) {
      exact += s.power_dbm;
      ++exact_n;
    } else {
      const double w = std::pow(d2, -power / 2.0);
      wsum += w;
      vsum += w * s.power_dbm;
    }
  }
  return exact_n ? exact / exact_n : vsum / wsum;
}

Vec msa(const Vec& windows, std::size_t b, std::size_t nw, std::size_t t, std::size_t d,
        std::size_t heads, int window, const Vec& wq, const Vec& bq, const Vec& wk, const Vec& bk,
        const Vec& wv, const Vec& bv, const Vec& proj_w, const Vec& proj_b, const Vec& relpos,
        const Vec& mask) {
  const std::size_t dh = d / heads;
  const int span = 2 * window - 1;
  Vec out(windows.size(), 0.0);
  Vec merged(t * d);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t wi = 0; wi < nw; ++wi) {
      const double* win = windows.data() + (bi * nw + wi) * t * d;
      const Vec wv_in(win, win + t * d);
      Vec q = add_bias_rows(matmul(wv_in, wq, t, d, d), bq, t, d);
      Vec k = add_bias_rows(matmul(wv_in, wk, t, d, d), bk, t, d);
      Vec v = add_bias_rows(matmul(wv_in, wv, t, d, d), bv, t, d);
      std::fill(merged.begin(), merged.end(), 0.0);
      for (std::size_t hh = 0; hh < heads; ++hh) {
        // scores for every ordered token pair
        Vec scores(t * t);
        for (std::size_t a = 0; a < t; ++a) {
          for (std::size_t bb = 0; bb < t; ++bb) {
            double dot = 0.0;
            for (std::size_t e = 0; e < dh; ++e) {
              dot += q[a * d + hh * dh + e] * k[bb * d + hh * dh + e];
            }
            double s = dot / std::sqrt(static_cast<double>(dh));
            if (!relpos.empty()) {
              const int ra = static_cast<int>(a) / window, ca = static_cast<int>(a) % window;
              const int rb = static_cast<int>(bb) / window, cb = static_cast<int>(bb) % window;
              const int idx = (ra - rb + window - 1) * span + (ca - cb + window - 1);
              s += relpos[hh * span * span + idx];
            }
            if (!mask.empty()) s += mask[(wi * t + a) * t + bb];
            scores[a * t + bb] = s;
          }
        }
        for (std::size_t a = 0; a < t; ++a) {
          double mx = scores[a * t];
          for (std::size_t bb = 1; bb < t; ++bb) mx = std::max(mx, scores[a * t + bb]);
          double sum = 0.0;
          for (std::size_t bb = 0; bb < t; ++bb) {
            scores[a * t + bb] = std::exp(scores[a * t + bb] - mx);
            sum += scores[a * t + bb];
          }
          for (std::size_t bb = 0; bb < t; ++bb) scores[a * t + bb] /= sum;
          for (std::size_t e = 0; e < dh; ++e) {
            double acc = 0.0;
            for (std::size_t bb = 0; bb < t; ++bb) {
              acc += scores[a * t + bb] * v[bb * d + hh * dh + e];
            }
            merged[a * d + hh * dh + e] = acc;
          }
        }
      }
      Vec projected = add_bias_rows(matmul(merged, proj_w, t, d, d), proj_b, t, d);
      std::copy(projected.begin(), projected.end(), out.begin() + (bi * nw + wi) * t * d);
    }
  }
  return out;
}

Vec shift_mask(int gr, int gc, int w, int s) {
  const int t = w * w;
  const int nw = (gr / w) * (gc / w);
  Vec mask(std::size_t(nw) * t * t, 0.0);
  if (s == 0) return mask;
  auto region = [&](int coord, int extent) {
    if (coord < extent - w) return 0;
    if (coord < extent - s) return 1;
    return 2;
  };
  for (int wi = 0; wi < gr / w; ++wi) {
    for (int wj = 0; wj < gc / w; ++wj) {
      const int win = wi * (gc / w) + wj;
      for (int a = 0; a < t; ++a) {
        const int ia = wi * w + a / w, ja = wj * w + a % w;
        const int la = 3 * region((ia + s) % gr, gr) + region((ja + s) % gc, gc);
        for (int bb = 0; bb < t; ++bb) {
          const int ib = wi * w + bb / w, jb = wj * w + bb % w;
          const int lb = 3 * region((ib + s) % gr, gr) + region((jb + s) % gc, gc);
          if (la != lb) mask[(std::size_t(win) * t + a) * t + bb] = -1e9;
        }
      }
    }
  }
  return mask;
}

namespace {

// One pre-norm block on a token grid held row-major as [b, gr*gc, d].
Vec block(const Vec& tokens, std::size_t b, int gr, int gc,
          const spectracast::swin::SwinConfig& cfg,
          const spectracast::swin::BlockParams<double>& p, bool shifted) {
  const std::size_t nt = std::size_t(gr) * gc;
  const std::size_t d = cfg.embed_dim;
  const int w = cfg.window;
  const int s = shifted ? cfg.shift : 0;
  const std::size_t t = std::size_t(w) * w;
  const std::size_t nw = nt / t;

  Vec y = layer_norm(tokens, b * nt, d, to_vec(p.ln1_gain.data()), to_vec(p.ln1_bias.data()),
                     1e-5);
  // cyclic shift
  if (s > 0) {
    Vec sh(y.size());
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (int i = 0; i < gr; ++i) {
        for (int j = 0; j < gc; ++j) {
          const std::size_t src = (bi * nt + std::size_t((i + s) % gr) * gc + (j + s) % gc) * d;
          const std::size_t dst = (bi * nt + std::size_t(i) * gc + j) * d;
          std::copy(y.begin() + src, y.begin() + src + d, sh.begin() + dst);
        }
      }
    }
    y = std::move(sh);
  }
  // partition into windows
  Vec win(y.size());
  {
    std::size_t q = 0;
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (int wi = 0; wi < gr / w; ++wi) {
        for (int wj = 0; wj < gc / w; ++wj) {
          for (int i = 0; i < w; ++i) {
            for (int j = 0; j < w; ++j) {
              const std::size_t src = (bi * nt + std::size_t(wi * w + i) * gc + wj * w + j) * d;
              std::copy(y.begin() + src, y.begin() + src + d, win.begin() + q);
              q += d;
            }
          }
        }
      }
    }
  }
  const Vec mask = s > 0 ? shift_mask(gr, gc, w, s) : Vec{};
  Vec att = msa(win, b, nw, t, d, cfg.heads, w, to_vec(p.wq.data()), to_vec(p.bq.data()),
                to_vec(p.wk.data()), to_vec(p.bk.data()), to_vec(p.wv.data()),
                to_vec(p.bv.data()), to_vec(p.proj_w.data()), to_vec(p.proj_b.data()),
                to_vec(p.relpos.data()), mask);
  // reverse windows
  Vec rev(att.size());
  {
    std::size_t q = 0;
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (int wi = 0; wi < gr / w; ++wi) {
        for (int wj = 0; wj < gc / w; ++wj) {
          for (int i = 0; i < w; ++i) {
            for (int j = 0; j < w; ++j) {
              const std::size_t dst = (bi * nt + std::size_t(wi * w + i) * gc + wj * w + j) * d;
              std::copy(att.begin() + q, att.begin() + q + d, rev.begin() + dst);
              q += d;
            }
          }
        }
      }
    }
  }
  // inverse shift
  if (s > 0) {
    Vec un(rev.size());
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (int i = 0; i < gr; ++i) {
        for (int j = 0; j < gc; ++j) {
          const std::size_t src =
              (bi * nt + std::size_t(((i - s) % gr + gr) % gr) * gc + ((j - s) % gc + gc) % gc) *
              d;
          const std::size_t dst = (bi * nt + std::size_t(i) * gc + j) * d;
          std::copy(rev.begin() + src, rev.begin() + src + d, un.begin() + dst);
        }
      }
    }
    rev = std::move(un);
  }
  Vec x1(tokens.size());
  for (std::size_t i = 0; i < x1.size(); ++i) x1[i] = tokens[i] + rev[i];

  Vec z = layer_norm(x1, b * nt, d, to_vec(p.ln2_gain.data()), to_vec(p.ln2_bias.data()), 1e-5);
  const std::size_t hidden = p.ffn1_w.shape()[1];
  Vec mid = add_bias_rows(matmul(z, to_vec(p.ffn1_w.data()), b * nt, d, hidden),
                          to_vec(p.ffn1_b.data()), b * nt, hidden);
  for (auto& v : mid) v = gelu_scalar(v);
  Vec ff = add_bias_rows(matmul(mid, to_vec(p.ffn2_w.data()), b * nt, hidden, d),
                         to_vec(p.ffn2_b.data()), b * nt, d);
  for (std::size_t i = 0; i < x1.size(); ++i) x1[i] += ff[i];
  return x1;
}

}  // namespace

Vec vit(const Vec& x, std::size_t b, std::size_t c, std::size_t m, std::size_t n,
        const spectracast::swin::SwinConfig& cfg,
        const spectracast::swin::StackParams<double>& params) {
  const int ph = cfg.patch_h, pw = cfg.patch_w;
  const int gr = static_cast<int>(m) / ph, gc = static_cast<int>(n) / pw;
  const std::size_t nt = std::size_t(gr) * gc;
  const std::size_t pd = std::size_t(ph) * pw * c;
  const std::size_t d = cfg.embed_dim;

  // flatten patches (token-major, then channel, patch row, patch col)
  Vec patches(b * nt * pd);
  {
    std::size_t q = 0;
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (int ti = 0; ti < gr; ++ti) {
        for (int tj = 0; tj < gc; ++tj) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            for (int pr = 0; pr < ph; ++pr) {
              for (int pc = 0; pc < pw; ++pc) {
                patches[q++] =
                    x[((bi * c + ch) * m + ti * ph + pr) * n + tj * pw + pc];
              }
            }
          }
        }
      }
    }
  }
  Vec tokens = add_bias_rows(matmul(patches, to_vec(params.embed_w.data()), b * nt, pd, d),
                             to_vec(params.embed_b.data()), b * nt, d);
  tokens = block(tokens, b, gr, gc, cfg, params.blocks[0], false);
  tokens = block(tokens, b, gr, gc, cfg, params.blocks[1], true);
  const std::size_t pd_out = params.unembed_w.shape()[1];
  const std::size_t c_out = pd_out / (std::size_t(ph) * pw);
  Vec flat = add_bias_rows(matmul(tokens, to_vec(params.unembed_w.data()), b * nt, d, pd_out),
                           to_vec(params.unembed_b.data()), b * nt, pd_out);
  Vec out(b * c_out * m * n);
  {
    std::size_t q = 0;
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (int ti = 0; ti < gr; ++ti) {
        for (int tj = 0; tj < gc; ++tj) {
          for (std::size_t ch = 0; ch < c_out; ++ch) {
            for (int pr = 0; pr < ph; ++pr) {
              for (int pc = 0; pc < pw; ++pc) {
                out[((bi * c_out + ch) * m + ti * ph + pr) * n + tj * pw + pc] = flat[q++];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

namespace {

struct Field {
  std::size_t b, c, m, n;
  std::size_t size() const { return b * c * m * n; }
};

Vec add3(const Vec& a, const Vec& b, const Vec& bias_per_channel, const Field& f) {
  Vec out(a.size());
  const std::size_t plane = f.m * f.n;
  for (std::size_t bi = 0; bi < f.b; ++bi) {
    for (std::size_t ch = 0; ch < f.c; ++ch) {
      const double bb = bias_per_channel[ch];
      const std::size_t base = (bi * f.c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[base + i] = a[base + i] + b[base + i] + bb;
    }
  }
  return out;
}

void apply_tanh(Vec& v) {
  for (auto& x : v) x = std::tanh(x);
}
void apply_sigmoid(Vec& v) {
  for (auto& x : v) x = 1.0 / (1.0 + std::exp(-x));
}

Vec hadamard_sum(const Vec& a, const Vec& b, const Vec& c, const Vec& d) {
  // a*b + c*d
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i] + c[i] * d[i];
  return out;
}

// 1x1 fusion of [c_new; m_new] down to ch channels, then tanh, times o.
Vec fuse_output(const Vec& o, const Vec& c_new, const Vec& m_new, const Vec& fusion_w,
                const Field& f) {
  const std::size_t plane = f.m * f.n;
  Vec out(o.size());
  for (std::size_t bi = 0; bi < f.b; ++bi) {
    for (std::size_t ch = 0; ch < f.c; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (std::size_t c2 = 0; c2 < 2 * f.c; ++c2) {
          const double src = c2 < f.c ? c_new[(bi * f.c + c2) * plane + i]
                                      : m_new[(bi * f.c + (c2 - f.c)) * plane + i];
          acc += fusion_w[ch * 2 * f.c + c2] * src;
        }
        out[(bi * f.c + ch) * plane + i] = o[(bi * f.c + ch) * plane + i] * std::tanh(acc);
      }
    }
  }
  return out;
}

}  // namespace

CellOut vitlstm_cell(const Vec& x, const Vec& h_prev, const Vec& c_prev, const Vec& m_in,
                     std::size_t b, std::size_t c_in, std::size_t ch, std::size_t m, std::size_t n,
                     const spectracast::swin::SwinConfig& cfg,
                     const spectracast::cells::VitLstmCellParams<double>& p) {
  const Field f{b, ch, m, n};
  auto vx = [&](const spectracast::cells::SwinGate<double>& g) {
    return vit(x, b, c_in, m, n, cfg, g.stack);
  };
  auto vs = [&](const spectracast::cells::SwinGate<double>& gate, const Vec& state) {
    return vit(state, b, ch, m, n, cfg, gate.stack);
  };
  Vec g = add3(vx(p.g_x), vs(p.g_h, h_prev), to_vec(p.b_g.data()), f);
  apply_tanh(g);
  Vec i = add3(vx(p.i_x), vs(p.i_h, h_prev), to_vec(p.b_i.data()), f);
  apply_sigmoid(i);
  Vec fg = add3(vx(p.f_x), vs(p.f_h, h_prev), to_vec(p.b_f.data()), f);
  apply_sigmoid(fg);
  Vec c_new = hadamard_sum(fg, c_prev, i, g);

  Vec gp = add3(vx(p.gp_x), vs(p.gp_m, m_in), to_vec(p.b_gp.data()), f);
  apply_tanh(gp);
  Vec ip = add3(vx(p.ip_x), vs(p.ip_m, m_in), to_vec(p.b_ip.data()), f);
  apply_sigmoid(ip);
  Vec fp = add3(vx(p.fp_x), vs(p.fp_m, m_in), to_vec(p.b_fp.data()), f);
  apply_sigmoid(fp);
  Vec m_new = hadamard_sum(fp, m_in, ip, gp);

  Vec o = add3(add3(vx(p.o_x), vs(p.o_h, h_prev), Vec(ch, 0.0), f),
               add3(vs(p.o_c, c_new), vs(p.o_m, m_new), Vec(ch, 0.0), f), to_vec(p.b_o.data()),
               f);
  apply_sigmoid(o);
  Vec h_new = fuse_output(o, c_new, m_new, to_vec(p.fusion_w.data()), f);
  return {h_new, c_new, m_new};
}

CellOut stlstm_cell(const Vec& x, const Vec& h_prev, const Vec& c_prev, const Vec& m_in,
                    std::size_t b, std::size_t c_in, std::size_t ch, std::size_t m, std::size_t n,
                    const spectracast::cells::StLstmCellParams<double>& p) {
  const Field f{b, ch, m, n};
  auto cx = [&](const spectracast::cells::ConvGate<double>& g) {
    const auto& ws = g.w.shape();
    return conv2d(x, to_vec(g.w.data()), to_vec(g.b.data()), b, c_in, m, n, ws[0], ws[2], ws[3]);
  };
  auto cs = [&](const spectracast::cells::ConvGate<double>& g, const Vec& state) {
    const auto& ws = g.w.shape();
    return conv2d(state, to_vec(g.w.data()), to_vec(g.b.data()), b, ch, m, n, ws[0], ws[2],
                  ws[3]);
  };
  Vec g = add3(cx(p.g_x), cs(p.g_h, h_prev), to_vec(p.b_g.data()), f);
  apply_tanh(g);
  Vec i = add3(cx(p.i_x), cs(p.i_h, h_prev), to_vec(p.b_i.data()), f);
  apply_sigmoid(i);
  Vec fg = add3(cx(p.f_x), cs(p.f_h, h_prev), to_vec(p.b_f.data()), f);
  apply_sigmoid(fg);
  Vec c_new = hadamard_sum(fg, c_prev, i, g);
  Vec gp = add3(cx(p.gp_x), cs(p.gp_m, m_in), to_vec(p.b_gp.data()), f);
  apply_tanh(gp);
  Vec ip = add3(cx(p.ip_x), cs(p.ip_m, m_in), to_vec(p.b_ip.data()), f);
  apply_sigmoid(ip);
  Vec fp = add3(cx(p.fp_x), cs(p.fp_m, m_in), to_vec(p.b_fp.data()), f);
  apply_sigmoid(fp);
  Vec m_new = hadamard_sum(fp, m_in, ip, gp);
  Vec o = add3(add3(cx(p.o_x), cs(p.o_h, h_prev), Vec(ch, 0.0), f),
               add3(cs(p.o_c, c_new), cs(p.o_m, m_new), Vec(ch, 0.0), f), to_vec(p.b_o.data()),
               f);
  apply_sigmoid(o);
  Vec h_new = fuse_output(o, c_new, m_new, to_vec(p.fusion_w.data()), f);
  return {h_new, c_new, m_new};
}

std::pair<Vec, Vec> convlstm_cell(const Vec& x, const Vec& h_prev, const Vec& c_prev,
                                  std::size_t b, std::size_t c_in, std::size_t ch, std::size_t m,
                                  std::size_t n,
                                  const spectracast::cells::ConvLstmParams<double>& p) {
  const Field f{b, ch, m, n};
  auto cx = [&](const spectracast::Tensor<double>& w) {
    const auto& ws = w.shape();
    return conv2d(x, to_vec(w.data()), {}, b, c_in, m, n, ws[0], ws[2], ws[3]);
  };
  auto cs = [&](const spectracast::Tensor<double>& w) {
    const auto& ws = w.shape();
    return conv2d(h_prev, to_vec(w.data()), {}, b, ch, m, n, ws[0], ws[2], ws[3]);
  };
  Vec i = add3(cx(p.wi_x), cs(p.wi_h), to_vec(p.b_i.data()), f);
  apply_sigmoid(i);
  Vec fg = add3(cx(p.wf_x), cs(p.wf_h), to_vec(p.b_f.data()), f);
  apply_sigmoid(fg);
  Vec g = add3(cx(p.wg_x), cs(p.wg_h), to_vec(p.b_g.data()), f);
  apply_tanh(g);
  Vec o = add3(cx(p.wo_x), cs(p.wo_h), to_vec(p.b_o.data()), f);
  apply_sigmoid(o);
  Vec c_new = hadamard_sum(fg, c_prev, i, g);
  Vec h_new(c_new.size());
  for (std::size_t idx = 0; idx < h_new.size(); ++idx) {
    h_new[idx] = o[idx] * std::tanh(c_new[idx]);
  }
  return {h_new, c_new};
}

double max_abs_diff(const Vec& a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::runtime_error("max_abs_diff: length mismatch");
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(a[i] - b[i]));
  return err;
}

}  // namespace oracles
