// Independent reference implementations used to cross-check the production
// kernels. Everything here is straight-line loop code over plain double
// buffers; none of it calls into the op/tape machinery it verifies.

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "spectracast/cells.hpp"
#include "spectracast/spectrum.hpp"
#include "spectracast/swin.hpp"

namespace oracles {

using Vec = std::vector<double>;

// C[m,n] = A[m,k] * B[k,n], triple loop.
Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n);

// Same-padded cross-correlation, quadruple loop per output element.
Vec conv2d(const Vec& x, const Vec& w, const Vec& bias, std::size_t b, std::size_t cin,
           std::size_t h, std::size_t wd, std::size_t cout, std::size_t kh, std::size_t kw);

// Direct mean/variance normalization of each row.
Vec layer_norm(const Vec& x, std::size_t rows, std::size_t cols, const Vec& gamma,
               const Vec& beta, double eps);

// Inverse-distance weighting evaluated from the formula at one cell.
double idw_cell(const std::vector<spectracast::spectrum::SensorReading>& readings, int row,
                int col, double power);

// Per-pair brute-force windowed attention. `relpos` is the [heads, (2w-1)^2]
// table (may be empty), `mask` an optional [nW, T, T] additive mask.
Vec msa(const Vec& windows, std::size_t b, std::size_t nw, std::size_t t, std::size_t d,
        std::size_t heads, int window, const Vec& wq, const Vec& bq, const Vec& wk, const Vec& bk,
        const Vec& wv, const Vec& bv, const Vec& proj_w, const Vec& proj_b, const Vec& relpos,
        const Vec& mask);

// Cross-region additive mask, re-derived with independent region labeling.
Vec shift_mask(int gr, int gc, int w, int s);

// Full two-block attention stack re-implemented with loops.
Vec vit(const Vec& x, std::size_t b, std::size_t c, std::size_t m, std::size_t n,
        const spectracast::swin::SwinConfig& cfg,
        const spectracast::swin::StackParams<double>& params);

struct CellOut {
  Vec h, c, m;
};

// Straight-line transcription of the spatiotemporal cell equations with the
// attention-stack gates.
CellOut vitlstm_cell(const Vec& x, const Vec& h_prev, const Vec& c_prev, const Vec& m_in,
                     std::size_t b, std::size_t c_in, std::size_t ch, std::size_t m, std::size_t n,
                     const spectracast::swin::SwinConfig& cfg,
                     const spectracast::cells::VitLstmCellParams<double>& p);

// Same skeleton with convolutional gates.
CellOut stlstm_cell(const Vec& x, const Vec& h_prev, const Vec& c_prev, const Vec& m_in,
                    std::size_t b, std::size_t c_in, std::size_t ch, std::size_t m, std::size_t n,
                    const spectracast::cells::StLstmCellParams<double>& p);

// Plain convolutional LSTM.
std::pair<Vec, Vec> convlstm_cell(const Vec& x, const Vec& h_prev, const Vec& c_prev,
                                  std::size_t b, std::size_t c_in, std::size_t ch, std::size_t m,
                                  std::size_t n,
                                  const spectracast::cells::ConvLstmParams<double>& p);

// Max absolute difference helper.
double max_abs_diff(const Vec& a, std::span<const double> b);

}  // namespace oracles
