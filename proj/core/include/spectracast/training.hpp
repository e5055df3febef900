// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop (seeded shuffles, one Adam step per iteration), MSE/RMSE/PSNR
// metrics, and test-split evaluation. With a fixed seed the loss trace is
// bit-identical run to run, and batch selection is a pure function of
// (seed, iteration) so resumed runs replay the uninterrupted schedule.

#pragma once

#include <cmath>
#include <type_traits>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spectracast/checkpoint.hpp"
#include "spectracast/forecaster.hpp"
#include "spectracast/spectrum.hpp"

namespace spectracast::train {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch = 4;
  int iterations = 1000;
  std::uint64_t seed = 0;
  int patience = 0;          // early stop after this many non-improving epochs; 0 = off
  int checkpoint_every = 0;  // checkpoint cadence in iterations; 0 = off

  void validate() const {
    if (lr <= 0) throw ConfigError("train: lr must be positive");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
    if (patience < 0 || checkpoint_every < 0) {
      throw ConfigError("train: patience/checkpoint_every must be >= 0");
    }
  }

  // JSON round trip (unknown keys rejected); defined in report.cpp.
  std::string to_json_string() const;
  static TrainConfig from_json_string(const std::string& text);
};

struct LossPoint {
  int iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool has_val = false;
};

// ---------------------------------------------------------------------------
// Loss and metrics
// ---------------------------------------------------------------------------

// Mean squared error over every element of every (pred, target) pair.
template <class T>
Tensor<T> mse_loss(std::type_identity_t<std::span<const Tensor<T>>> preds,
                   std::type_identity_t<std::span<const Tensor<T>>> targets) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw DimensionError("mse_loss: prediction/target frame counts disagree");
  }
  std::size_t total = 0;
  Tensor<T> acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].shape() != targets[i].shape()) {
      throw DimensionError("mse_loss: frame " + std::to_string(i) + " shapes disagree: " +
                           shape_str(preds[i].shape()) + " vs " + shape_str(targets[i].shape()));
    }
    auto d = sub(preds[i], targets[i]);
    auto sq = sum(mul(d, d));
    acc = acc.defined() ? add(acc, sq) : sq;
    total += preds[i].size();
  }
  return scale(acc, 1.0 / static_cast<double>(total));
}

template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  return mse_loss<T>(std::span<const Tensor<T>>(&pred, 1),
                     std::span<const Tensor<T>>(&target, 1));
}

// 10*log10(max^2 / mse) in dB; +inf when mse is exactly zero.
inline double psnr(double mse, double max_val = 1.0) {
  if (mse < 0) throw ContractError("psnr: negative mse");
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

struct EvalReport {
  std::string model;
  int horizons = 0;
  std::vector<double> mse, rmse, psnr_db;  // one entry per forecast step
  double avg_mse = 0, avg_rmse = 0, avg_psnr = 0;
  std::map<std::string, std::string> meta;
};

// CSV schema `model,horizon,mse,rmse,psnr` (+ one `avg` row per model) and a
// two-panel SVG line chart. Defined in report.cpp.
std::string report_csv_string(std::span<const EvalReport> reports);
void report_emit_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);
std::vector<EvalReport> report_parse_csv_string(const std::string& text);
std::vector<EvalReport> report_parse_csv(const std::filesystem::path& path);
std::string report_svg_string(std::span<const EvalReport> reports);
void report_emit_svg(std::span<const EvalReport> reports, const std::filesystem::path& path);
void loss_history_write_csv(std::span<const LossPoint> history,
                            const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Deterministic batch schedule
// ---------------------------------------------------------------------------

inline std::size_t batches_per_epoch(std::size_t n_samples, int batch) {
  return std::max<std::size_t>(1, n_samples / static_cast<std::size_t>(batch));
}

// Sample indices for one iteration, derived purely from (seed, iteration).
inline std::vector<std::size_t> batch_indices(std::uint64_t seed, int iteration,
                                              std::size_t n_samples, int batch) {
  const std::size_t ipe = batches_per_epoch(n_samples, batch);
  const std::size_t epoch = static_cast<std::size_t>(iteration) / ipe;
  const std::size_t pos = static_cast<std::size_t>(iteration) % ipe;
  std::vector<std::size_t> perm(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) perm[i] = i;
  Rng rng(mix_seed(seed, 0x300 + epoch));
  rng.shuffle(perm);
  std::vector<std::size_t> out(static_cast<std::size_t>(batch));
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = perm[(pos * batch + t) % n_samples];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

template <class T>
struct TrainResult {
  forecast::Forecaster<T> model;
  AdamState<T> opt;
  std::vector<LossPoint> history;
  int iterations_run = 0;
  bool early_stopped = false;
};

template <class T>
struct TrainOptions {
  // Resume point; when absent the model is freshly initialized from the
  // model config seed and training starts at iteration 0.
  std::optional<forecast::Forecaster<T>> initial_model;
  std::optional<AdamState<T>> initial_opt;
  int start_iteration = 0;
  // Called after an optimizer step at the configured cadence.
  std::function<void(int, forecast::Forecaster<T>&, AdamState<T>&)> on_checkpoint;
  // Return true to stop after the current iteration (probe harnesses).
  std::function<bool(int, double)> stop_after;
};

namespace detail {

// Supervised loss of one batch: forward with teacher forcing over the first
// J frames, targets are frames 2..J+K of each sample.
template <class T>
double batch_loss_and_maybe_step(const spectrum::SequenceDataset& ds,
                                 forecast::Forecaster<T>& model,
                                 std::span<const std::size_t> starts, AdamState<T>* opt,
                                 int iteration) {
  const int j = model.cfg.j, k = model.cfg.k;
  std::vector<Tensor<T>> context;
  for (int t = 0; t < j; ++t) context.push_back(spectrum::frames_batch<T>(ds.data, starts, t));
  std::vector<Tensor<T>> targets;
  for (int t = 1; t < j + k; ++t) targets.push_back(spectrum::frames_batch<T>(ds.data, starts, t));

  auto preds = forecast::model_forward(model, context, forecast::RolloutMode::Training);
  auto loss = mse_loss<T>(preds, targets);
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) {
    throw NumericError("training diverged (non-finite loss) at iteration " +
                       std::to_string(iteration));
  }
  if (opt) {
    zero_grads(model.params);
    backward(loss);
    adam_step(model.params, *opt);
  }
  return value;
}

template <class T>
double split_loss(const spectrum::SequenceDataset& ds, forecast::Forecaster<T>& model,
                  std::span<const std::size_t> starts, int batch) {
  NoGradGuard no_grad;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t off = 0; off < starts.size(); off += batch) {
    const std::size_t n = std::min<std::size_t>(batch, starts.size() - off);
    std::vector<std::size_t> chunk(starts.begin() + off, starts.begin() + off + n);
    sum += batch_loss_and_maybe_step<T>(ds, model, chunk, nullptr, -1) * static_cast<double>(n);
    count += n;
  }
  return sum / static_cast<double>(count);
}

}  // namespace detail

template <class T>
TrainResult<T> train(const spectrum::SequenceDataset& ds, const forecast::ModelConfig& mcfg,
                     const TrainConfig& tcfg, TrainOptions<T> opts = {}) {
  tcfg.validate();
  mcfg.validate();
  if (ds.train_starts.empty()) throw DataError("train: dataset has no training samples");

  TrainResult<T> result;
  result.model = opts.initial_model ? std::move(*opts.initial_model) : forecast::model_init<T>(mcfg);
  if (opts.initial_opt) {
    result.opt = std::move(*opts.initial_opt);
  } else {
    result.opt.cfg = AdamConfig{tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps};
  }

  const std::size_t ipe = batches_per_epoch(ds.train_starts.size(), tcfg.batch);
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  for (int iter = opts.start_iteration; iter < tcfg.iterations; ++iter) {
    const auto picks = batch_indices(tcfg.seed, iter, ds.train_starts.size(), tcfg.batch);
    std::vector<std::size_t> starts(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) starts[i] = ds.train_starts[picks[i]];
    const double loss =
        detail::batch_loss_and_maybe_step<T>(ds, result.model, starts, &result.opt, iter);
    LossPoint point{iter, loss, 0.0, false};

    const bool epoch_end = (static_cast<std::size_t>(iter + 1) % ipe) == 0;
    if (epoch_end && !ds.val_starts.empty()) {
      point.val_loss = detail::split_loss<T>(ds, result.model, ds.val_starts, tcfg.batch);
      point.has_val = true;
      if (tcfg.patience > 0) {
        if (point.val_loss < best_val) {
          best_val = point.val_loss;
          epochs_since_best = 0;
        } else if (++epochs_since_best >= tcfg.patience) {
          result.history.push_back(point);
          result.iterations_run = iter + 1;
          result.early_stopped = true;
          return result;
        }
      }
    }
    result.history.push_back(point);
    result.iterations_run = iter + 1;

    if (tcfg.checkpoint_every > 0 && opts.on_checkpoint &&
        (iter + 1) % tcfg.checkpoint_every == 0) {
      opts.on_checkpoint(iter + 1, result.model, result.opt);
    }
    if (opts.stop_after && opts.stop_after(iter, loss)) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class SplitSel { Train, Val, Test };

inline const std::vector<std::size_t>& split_starts(const spectrum::SequenceDataset& ds,
                                                    SplitSel sel) {
  switch (sel) {
    case SplitSel::Train: return ds.train_starts;
    case SplitSel::Val: return ds.val_starts;
    case SplitSel::Test: return ds.test_starts;
  }
  return ds.test_starts;
}

inline const char* split_name(SplitSel sel) {
  switch (sel) {
    case SplitSel::Train: return "train";
    case SplitSel::Val: return "val";
    case SplitSel::Test: return "test";
  }
  return "?";
}

// Generic per-horizon metric accumulation; `forecast_fn` maps a batch of
// sample starts to K predicted frames. Deterministic: batches and horizons
// accumulate in fixed order with double-precision sums.
template <class T>
EvalReport evaluate_batches(
    const spectrum::SequenceDataset& ds, SplitSel sel, int j, int k, const std::string& name,
    const std::type_identity_t<
        std::function<std::vector<Tensor<T>>(std::span<const std::size_t>)>>& forecast_fn,
    int eval_batch = 8) {
  const auto& starts = split_starts(ds, sel);
  if (starts.empty()) {
    throw DataError(std::string("evaluate: split '") + split_name(sel) + "' has no samples");
  }
  std::vector<double> se_sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t off = 0; off < starts.size(); off += eval_batch) {
    const std::size_t n = std::min<std::size_t>(eval_batch, starts.size() - off);
    std::vector<std::size_t> chunk(starts.begin() + off, starts.begin() + off + n);
    const auto preds = forecast_fn(chunk);
    if (static_cast<int>(preds.size()) != k) {
      throw DimensionError("evaluate: predictor returned " + std::to_string(preds.size()) +
                           " frames, expected " + std::to_string(k));
    }
    for (int h = 0; h < k; ++h) {
      const auto target = spectrum::frames_batch<T>(ds.data, chunk, j + h);
      const auto pv = preds[h].data();
      const auto tv = target.data();
      if (pv.size() != tv.size()) throw DimensionError("evaluate: frame extent mismatch");
      double acc = 0.0;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = static_cast<double>(pv[i]) - static_cast<double>(tv[i]);
        acc += d * d;
      }
      se_sum[h] += acc;
      count[h] += pv.size();
    }
  }
  EvalReport rep;
  rep.model = name;
  rep.horizons = k;
  for (int h = 0; h < k; ++h) {
    const double mse = se_sum[h] / static_cast<double>(count[h]);
    rep.mse.push_back(mse);
    rep.rmse.push_back(std::sqrt(mse));
    rep.psnr_db.push_back(psnr(mse));
  }
  for (int h = 0; h < k; ++h) {
    rep.avg_mse += rep.mse[h];
    rep.avg_rmse += rep.rmse[h];
    rep.avg_psnr += rep.psnr_db[h];
  }
  rep.avg_mse /= k;
  rep.avg_rmse /= k;
  rep.avg_psnr /= k;
  rep.meta["split"] = split_name(sel);
  rep.meta["samples"] = std::to_string(starts.size());
  rep.meta["averaging"] = "over samples and horizons";
  return rep;
}

// Evaluates a trained model on a split. Parameters are not mutated; repeated
// calls yield byte-identical reports.
template <class T>
EvalReport evaluate(const forecast::Forecaster<T>& model, const spectrum::SequenceDataset& ds,
                    SplitSel sel = SplitSel::Test, int eval_batch = 8) {
  NoGradGuard no_grad;
  const int j = model.cfg.j, k = model.cfg.k;
  if (ds.j != j || ds.k != k) {
    throw CheckpointError("evaluate: dataset windows (j=" + std::to_string(ds.j) +
                          ",k=" + std::to_string(ds.k) + ") disagree with model (j=" +
                          std::to_string(j) + ",k=" + std::to_string(k) + ")");
  }
  if (ds.data.c != static_cast<std::uint32_t>(model.cfg.grid.channels) ||
      ds.data.rows != static_cast<std::uint32_t>(model.cfg.grid.rows) ||
      ds.data.cols != static_cast<std::uint32_t>(model.cfg.grid.cols)) {
    throw CheckpointError("evaluate: dataset geometry disagrees with model grid");
  }
  auto fn = [&](std::span<const std::size_t> chunk) {
    std::vector<Tensor<T>> context;
    for (int t = 0; t < j; ++t) context.push_back(spectrum::frames_batch<T>(ds.data, chunk, t));
    return forecast::model_predict(model, context);
  };
  auto rep = evaluate_batches<T>(ds, sel, j, k, to_string(model.cfg.cell), fn, eval_batch);
  rep.meta["seed"] = std::to_string(model.cfg.seed);
  return rep;
}

// MSE of predicting the global mean of the supervised training targets
// (frames 2..J+K of every training sample); the reference level for
// learning-sanity probes.
inline double constant_mean_predictor_mse(const spectrum::SequenceDataset& ds) {
  double sum = 0.0;
  std::size_t n = 0;
  const std::size_t fsz = ds.data.frame_size();
  for (const auto start : ds.train_starts) {
    for (int t = 1; t < ds.j + ds.k; ++t) {
      const float* f = ds.data.frame(start + t);
      for (std::size_t i = 0; i < fsz; ++i) sum += f[i];
      n += fsz;
    }
  }
  if (n == 0) throw DataError("constant_mean_predictor_mse: no training targets");
  const double mu = sum / static_cast<double>(n);
  double se = 0.0;
  for (const auto start : ds.train_starts) {
    for (int t = 1; t < ds.j + ds.k; ++t) {
      const float* f = ds.data.frame(start + t);
      for (std::size_t i = 0; i < fsz; ++i) {
        const double d = f[i] - mu;
        se += d * d;
      }
    }
  }
  return se / static_cast<double>(n);
}

}  // namespace spectracast::train
