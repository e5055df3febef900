// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectracast/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spectracast/checkpoint.hpp"
#include "spectracast/gradcheck.hpp"
#include "spectracast/manifest.hpp"
#include "spectracast/training.hpp"
#include "spectracast/version.hpp"

namespace spectracast::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using spectrum::SpgData;

enum class Precision { F32, F64 };

Precision precision_from_env() {
  const char* env = std::getenv("SPECTRACAST_PRECISION");
  if (!env || std::string(env).empty() || std::string(env) == "f32") return Precision::F32;
  if (std::string(env) == "f64") return Precision::F64;
  throw ConfigError("SPECTRACAST_PRECISION must be 'f32' or 'f64', got '" + std::string(env) +
                    "'");
}

const char* precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Shared data-pipeline options
// ---------------------------------------------------------------------------

struct EncodeOpts {
  double vmin = -110.0, vmax = -10.0;
  double idw_power = 2.0;
  int interval = 1;
};

SpgData encode_series(const spectrum::ReadingSeries& series, const EncodeOpts& opts,
                      std::uint64_t seed) {
  if (series.frames.empty()) throw DataError("no readings to interpolate");
  for (std::size_t i = 1; i < series.frames.size(); ++i) {
    const auto gap = series.frames[i].t_min - series.frames[i - 1].t_min;
    if (gap != opts.interval) {
      throw DataError("timestamps are not consecutive at the sampling interval: gap of " +
                      std::to_string(gap) + " min before t=" +
                      std::to_string(series.frames[i].t_min));
    }
  }
  SpgData d;
  d.t = static_cast<std::uint32_t>(series.frames.size());
  d.c = 3;
  d.rows = static_cast<std::uint32_t>(series.rows);
  d.cols = static_cast<std::uint32_t>(series.cols);
  d.meta = {opts.interval, opts.vmin, opts.vmax, seed, "jet-encoded"};
  d.values.reserve(std::size_t(d.t) * d.frame_size());
  for (const auto& rf : series.frames) {
    const auto field =
        spectrum::idw_interpolate(rf.readings, series.rows, series.cols, opts.idw_power, rf.t_min);
    const auto enc = spectrum::jet_encode(field, opts.vmin, opts.vmax);
    d.values.insert(d.values.end(), enc.channels.begin(), enc.channels.end());
  }
  return d;
}

SpgData field_series(const spectrum::ReadingSeries& series, const EncodeOpts& opts,
                     std::uint64_t seed) {
  SpgData d;
  d.t = static_cast<std::uint32_t>(series.frames.size());
  d.c = 1;
  d.rows = static_cast<std::uint32_t>(series.rows);
  d.cols = static_cast<std::uint32_t>(series.cols);
  d.meta = {opts.interval, opts.vmin, opts.vmax, seed, "dbm-field"};
  d.values.reserve(std::size_t(d.t) * d.frame_size());
  for (const auto& rf : series.frames) {
    const auto field =
        spectrum::idw_interpolate(rf.readings, series.rows, series.cols, opts.idw_power, rf.t_min);
    for (const double v : field.values) d.values.push_back(static_cast<float>(v));
  }
  return d;
}

// ---------------------------------------------------------------------------
// synth / ingest / interpolate
// ---------------------------------------------------------------------------

struct SynthArgs {
  spectrum::SynthConfig cfg;
  EncodeOpts enc;
  std::string out, readings_csv, truth_out;
};

int run_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
  Timer timer;
  auto result = spectrum::synth_generate(a.cfg);
  auto series = spectrum::group_readings(result.readings, a.cfg.rows, a.cfg.cols);
  auto data = encode_series(series, a.enc, a.cfg.seed);
  data.meta.seed = a.cfg.seed;
  spectrum::spg_write(a.out, data);
  RunManifest m;
  m.command = "synth";
  m.argv = argv;
  m.outputs = {a.out};
  if (!a.readings_csv.empty()) {
    spectrum::write_readings_csv(a.readings_csv, result.readings);
    m.outputs.push_back(a.readings_csv);
  }
  if (!a.truth_out.empty()) {
    SpgData truth;
    truth.t = static_cast<std::uint32_t>(result.truth.size());
    truth.c = 1;
    truth.rows = static_cast<std::uint32_t>(a.cfg.rows);
    truth.cols = static_cast<std::uint32_t>(a.cfg.cols);
    truth.meta = {a.cfg.interval_min, a.enc.vmin, a.enc.vmax, a.cfg.seed, "dbm-field"};
    for (const auto& f : result.truth) {
      for (const double v : f.values) truth.values.push_back(static_cast<float>(v));
    }
    spectrum::spg_write(a.truth_out, truth);
    m.outputs.push_back(a.truth_out);
  }
  json cfg;
  cfg["rows"] = a.cfg.rows;
  cfg["cols"] = a.cfg.cols;
  cfg["sensors"] = a.cfg.sensors;
  cfg["minutes"] = a.cfg.minutes;
  cfg["interval_min"] = a.cfg.interval_min;
  cfg["baseline_dbm"] = a.cfg.baseline_dbm;
  cfg["diurnal_amp_db"] = a.cfg.diurnal_amp_db;
  cfg["period_min"] = a.cfg.period_min;
  cfg["noise_dbm"] = a.cfg.noise_dbm;
  cfg["emitters"] = a.cfg.auto_emitters;
  cfg["vmin_dbm"] = a.enc.vmin;
  cfg["vmax_dbm"] = a.enc.vmax;
  cfg["idw_power"] = a.enc.idw_power;
  m.config_json = cfg.dump();
  m.seeds["synth"] = a.cfg.seed;
  m.tool_version = kToolVersion;
  m.precision = precision_name(precision_from_env());
  m.duration_seconds = timer.seconds();
  write_manifest(a.out + ".manifest.json", m);
  std::cout << "wrote " << a.out << " (" << data.t << "x" << data.c << "x" << data.rows << "x"
            << data.cols << ")\n";
  return 0;
}

struct IngestArgs {
  std::string csv, out;
  int rows = 16, cols = 16;
  EncodeOpts enc;
  bool raw_field = false;  // interpolate subcommand
};

int run_ingest(const IngestArgs& a, const char* command, const std::vector<std::string>& argv) {
  Timer timer;
  auto series = spectrum::ingest_readings_csv(a.csv, a.rows, a.cols);
  if (series.frames.empty()) throw DataError("readings file holds no readings");
  auto data = a.raw_field ? field_series(series, a.enc, 0) : encode_series(series, a.enc, 0);
  spectrum::spg_write(a.out, data);
  RunManifest m;
  m.command = command;
  m.argv = argv;
  m.inputs = {a.csv};
  m.outputs = {a.out};
  json cfg;
  cfg["rows"] = a.rows;
  cfg["cols"] = a.cols;
  cfg["vmin_dbm"] = a.enc.vmin;
  cfg["vmax_dbm"] = a.enc.vmax;
  cfg["idw_power"] = a.enc.idw_power;
  cfg["interval_min"] = a.enc.interval;
  m.config_json = cfg.dump();
  m.tool_version = kToolVersion;
  m.precision = precision_name(precision_from_env());
  m.duration_seconds = timer.seconds();
  write_manifest(a.out + ".manifest.json", m);
  std::cout << "wrote " << a.out << " (" << data.t << " frames of " << data.rows << "x"
            << data.cols << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train / predict / eval / compare
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, model_config, train_config, resume;
  std::string model_kind;  // empty = from config/default
  int stride = 1;
  // Flag overrides (negative/empty = not set).
  int iterations = -1, batch = -1, j = -1, k = -1, layers = -1, embed_dim = -1;
  double lr = -1.0;
  std::int64_t seed = -1;
};

forecast::ModelConfig resolve_model_config(const TrainArgs& a, const SpgData& data) {
  forecast::ModelConfig cfg;
  bool config_grid_given = false;
  if (!a.model_config.empty()) {
    const std::string text = read_text_file(a.model_config);
    cfg = forecast::ModelConfig::from_json_string(text);
    config_grid_given = json::parse(text).contains("grid");
  }
  if (!a.model_kind.empty()) cfg.cell = forecast::cell_kind_from_string(a.model_kind);
  if (a.j > 0) cfg.j = a.j;
  if (a.k > 0) cfg.k = a.k;
  if (a.layers > 0) cfg.layers = a.layers;
  if (a.embed_dim > 0) cfg.swin.embed_dim = a.embed_dim;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  const forecast::GridSpec from_data{static_cast<int>(data.c), static_cast<int>(data.rows),
                                     static_cast<int>(data.cols)};
  if (config_grid_given &&
      (cfg.grid.channels != from_data.channels || cfg.grid.rows != from_data.rows ||
       cfg.grid.cols != from_data.cols)) {
    throw ConfigError("model config grid disagrees with dataset geometry");
  }
  cfg.grid = from_data;
  return cfg;
}

train::TrainConfig resolve_train_config(const TrainArgs& a) {
  train::TrainConfig cfg;
  if (!a.train_config.empty()) {
    cfg = train::TrainConfig::from_json_string(read_text_file(a.train_config));
  }
  if (a.iterations > 0) cfg.iterations = a.iterations;
  if (a.batch > 0) cfg.batch = a.batch;
  if (a.lr > 0) cfg.lr = a.lr;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  return cfg;
}

template <class T>
int run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  Timer timer;
  auto data = spectrum::spg_read(a.data);
  auto mcfg = resolve_model_config(a, data);
  auto tcfg = resolve_train_config(a);
  auto ds = spectrum::make_dataset(std::move(data), mcfg.j, mcfg.k, a.stride);

  train::TrainOptions<T> opts;
  if (!a.resume.empty()) {
    auto ck = forecast::checkpoint_load<T>(a.resume);
    opts.start_iteration = static_cast<int>(ck.opt.step);
    opts.initial_model = std::move(ck.model);
    if (ck.has_opt) opts.initial_opt = std::move(ck.opt);
    mcfg = opts.initial_model->cfg;
  }
  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  if (tcfg.checkpoint_every > 0) {
    opts.on_checkpoint = [&](int iter, forecast::Forecaster<T>& model, AdamState<T>& opt) {
      forecast::checkpoint_save(out_dir / ("iter" + std::to_string(iter)), model, &opt);
    };
  }
  auto result = train::train<T>(ds, mcfg, tcfg, std::move(opts));
  forecast::checkpoint_save(out_dir, result.model, &result.opt);
  train::loss_history_write_csv(result.history, out_dir / "loss_history.csv");

  RunManifest m;
  m.command = "train";
  m.argv = argv;
  m.inputs = {a.data};
  m.outputs = {(out_dir / "params.blob").string(), (out_dir / "loss_history.csv").string()};
  json cfg;
  cfg["model"] = json::parse(mcfg.to_json_string());
  cfg["train"] = json::parse(tcfg.to_json_string());
  cfg["stride"] = a.stride;
  cfg["split"] = {{"train", ds.train_starts.size()},
                  {"val", ds.val_starts.size()},
                  {"test", ds.test_starts.size()},
                  {"ratio", "4:1:1"},
                  {"chronological", true}};
  cfg["iterations_run"] = result.iterations_run;
  m.config_json = cfg.dump();
  m.seeds["model"] = mcfg.seed;
  m.seeds["train"] = tcfg.seed;
  m.seeds["data"] = ds.data.meta.seed;
  m.tool_version = kToolVersion;
  m.precision = precision_name(precision_from_env());
  m.duration_seconds = timer.seconds();
  write_manifest(out_dir / "manifest.json", m);
  const double final_loss = result.history.empty() ? 0.0 : result.history.back().train_loss;
  std::cout << "trained " << to_string(mcfg.cell) << " for " << result.iterations_run
            << " iterations, final train loss " << final_loss << "\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, report, svg, split = "test";
  int sample = 0;
  std::string out;  // predict
};

train::SplitSel parse_split(const std::string& s) {
  if (s == "train") return train::SplitSel::Train;
  if (s == "val") return train::SplitSel::Val;
  if (s == "test") return train::SplitSel::Test;
  throw ConfigError("split must be train|val|test, got '" + s + "'");
}

template <class T>
int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  Timer timer;
  auto ck = forecast::checkpoint_load<T>(a.ckpt);
  auto data = spectrum::spg_read(a.data);
  auto ds = spectrum::make_dataset(std::move(data), ck.model.cfg.j, ck.model.cfg.k);
  auto report = train::evaluate(ck.model, ds, parse_split(a.split));
  std::vector<train::EvalReport> reports{report};
  train::report_emit_csv(reports, a.report);
  RunManifest m;
  m.command = "eval";
  m.argv = argv;
  m.inputs = {a.ckpt, a.data};
  m.outputs = {a.report};
  if (!a.svg.empty()) {
    train::report_emit_svg(reports, a.svg);
    m.outputs.push_back(a.svg);
  }
  json cfg;
  cfg["split"] = a.split;
  cfg["model"] = json::parse(ck.model.cfg.to_json_string());
  m.config_json = cfg.dump();
  m.tool_version = kToolVersion;
  m.precision = precision_name(precision_from_env());
  m.duration_seconds = timer.seconds();
  write_manifest(a.report + ".manifest.json", m);
  std::cout << "avg mse " << report.avg_mse << ", avg psnr " << report.avg_psnr << " dB over "
            << report.meta["samples"] << " samples\n";
  return 0;
}

template <class T>
int run_predict(const EvalArgs& a, const std::vector<std::string>& argv) {
  Timer timer;
  auto ck = forecast::checkpoint_load<T>(a.ckpt);
  auto data = spectrum::spg_read(a.data);
  const auto meta = data.meta;
  auto ds = spectrum::make_dataset(std::move(data), ck.model.cfg.j, ck.model.cfg.k);
  const auto& starts = train::split_starts(ds, parse_split(a.split));
  if (starts.empty() || a.sample < 0 || static_cast<std::size_t>(a.sample) >= starts.size()) {
    throw DataError("sample index " + std::to_string(a.sample) + " out of range (split has " +
                    std::to_string(starts.size()) + " samples)");
  }
  NoGradGuard no_grad;
  const std::size_t start = starts[a.sample];
  std::vector<std::size_t> one{start};
  std::vector<Tensor<T>> context;
  for (int t = 0; t < ck.model.cfg.j; ++t) {
    context.push_back(spectrum::frames_batch<T>(ds.data, one, t));
  }
  auto preds = forecast::model_predict(ck.model, context);
  SpgData out;
  out.t = static_cast<std::uint32_t>(preds.size());
  out.c = ds.data.c;
  out.rows = ds.data.rows;
  out.cols = ds.data.cols;
  out.meta = meta;
  for (const auto& p : preds) {
    for (const auto v : p.data()) out.values.push_back(static_cast<float>(v));
  }
  spectrum::spg_write(a.out, out);
  RunManifest m;
  m.command = "predict";
  m.argv = argv;
  m.inputs = {a.ckpt, a.data};
  m.outputs = {a.out};
  json cfg;
  cfg["split"] = a.split;
  cfg["sample"] = a.sample;
  cfg["start_frame"] = start;
  m.config_json = cfg.dump();
  m.tool_version = kToolVersion;
  m.precision = precision_name(precision_from_env());
  m.duration_seconds = timer.seconds();
  write_manifest(a.out + ".manifest.json", m);
  std::cout << "wrote " << out.t << " predicted frames to " << a.out << "\n";
  return 0;
}

struct CompareArgs {
  std::string data, train_config, out;
  std::vector<std::string> models{"vitlstm", "stlstm", "convlstm"};
  int stride = 1;
  int iterations = -1, batch = -1, j = -1, k = -1, embed_dim = -1;
  double lr = -1.0;
  std::int64_t seed = -1;
};

template <class T>
int run_compare(const CompareArgs& a, const std::vector<std::string>& argv) {
  Timer timer;
  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  std::vector<train::EvalReport> reports;
  json run_cfg;
  for (const auto& name : a.models) {
    TrainArgs ta;
    ta.data = a.data;
    ta.train_config = a.train_config;
    ta.model_kind = name;
    ta.stride = a.stride;
    ta.iterations = a.iterations;
    ta.batch = a.batch;
    ta.lr = a.lr;
    ta.seed = a.seed;
    ta.j = a.j;
    ta.k = a.k;
    ta.embed_dim = a.embed_dim;
    auto data = spectrum::spg_read(a.data);
    auto mcfg = resolve_model_config(ta, data);
    auto tcfg = resolve_train_config(ta);
    auto ds = spectrum::make_dataset(std::move(data), mcfg.j, mcfg.k, a.stride);
    std::cout << "training " << name << " (" << tcfg.iterations << " iterations)\n";
    auto result = train::train<T>(ds, mcfg, tcfg);
    forecast::checkpoint_save(out_dir / name, result.model, &result.opt);
    train::loss_history_write_csv(result.history, out_dir / (name + "_loss.csv"));
    reports.push_back(train::evaluate(result.model, ds));
    run_cfg["model_" + name] = json::parse(mcfg.to_json_string());
    if (!run_cfg.contains("train")) run_cfg["train"] = json::parse(tcfg.to_json_string());
  }
  train::report_emit_csv(reports, out_dir / "compare.csv");
  train::report_emit_svg(reports, out_dir / "compare.svg");
  RunManifest m;
  m.command = "compare";
  m.argv = argv;
  m.inputs = {a.data};
  m.outputs = {(out_dir / "compare.csv").string(), (out_dir / "compare.svg").string()};
  m.config_json = run_cfg.dump();
  if (a.seed >= 0) m.seeds["train"] = static_cast<std::uint64_t>(a.seed);
  m.tool_version = kToolVersion;
  m.precision = precision_name(precision_from_env());
  m.duration_seconds = timer.seconds();
  write_manifest(out_dir / "manifest.json", m);
  for (const auto& r : reports) {
    std::cout << r.model << ": avg mse " << r.avg_mse << ", avg psnr " << r.avg_psnr << " dB\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradCheckLine {
  std::string component;
  double max_rel_err;
};

std::vector<GradCheckLine> gradcheck_suite(std::uint64_t seed) {
  // Always 64-bit: finite differences are not trustworthy in float.
  FiniteCheckGuard checks(true);
  Rng rng(mix_seed(seed, 0x6c));
  auto randt = [&](Shape shape, double s = 0.5) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.normal(0.0, s);
    return Tensor<double>::from_data(std::move(shape), std::move(data));
  };
  std::vector<GradCheckLine> lines;

  {
    auto b = randt({4, 5});
    lines.push_back({"matmul", grad_check(
        [&](const Tensor<double>& x) { return sum(mul(matmul(x, b), matmul(x, b))); },
        randt({3, 4}))});
  }
  lines.push_back({"softmax", grad_check(
      [](const Tensor<double>& x) {
        auto y = softmax_lastdim(x);
        return sum(mul(y, y));
      },
      randt({3, 6}))});
  {
    auto gamma = randt({6}, 0.3);
    auto beta = randt({6}, 0.3);
    lines.push_back({"layer_norm", grad_check(
        [&](const Tensor<double>& x) {
          auto y = layer_norm(x, gamma, beta);
          return sum(mul(y, y));
        },
        randt({4, 6}))});
  }
  lines.push_back({"sigmoid", grad_check(
      [](const Tensor<double>& x) { return sum(mul(sigmoid(x), sigmoid(x))); }, randt({3, 5}))});
  lines.push_back({"tanh", grad_check(
      [](const Tensor<double>& x) { return sum(mul(tanh(x), tanh(x))); }, randt({3, 5}))});
  lines.push_back({"gelu", grad_check(
      [](const Tensor<double>& x) { return sum(mul(gelu(x), gelu(x))); }, randt({3, 5}))});
  {
    auto w = randt({2, 3, 3, 3});
    auto b = randt({2});
    lines.push_back({"conv2d", grad_check(
        [&](const Tensor<double>& x) {
          auto y = conv2d(x, w, b);
          return sum(mul(y, y));
        },
        randt({2, 3, 5, 5}))});
  }
  {
    auto target = randt({2, 3, 4, 4});
    lines.push_back({"mse_loss", grad_check(
        [&](const Tensor<double>& x) { return train::mse_loss(x, target); },
        randt({2, 3, 4, 4}))});
  }

  swin::SwinConfig tiny;
  tiny.patch_h = tiny.patch_w = 2;
  tiny.window = 2;
  tiny.shift = 1;
  tiny.heads = 2;
  tiny.embed_dim = 8;
  tiny.mlp_ratio = 2;
  {
    auto stack = swin::init_stack<double>(tiny, 3, 3, rng);
    auto x = randt({1, 3, 8, 8});
    std::map<std::string, Tensor<double>> params;
    swin::visit_stack(stack, "vit", [&](const std::string& n, Tensor<double>& t) {
      params.emplace(n, t);
    });
    lines.push_back({"vit.params", grad_check_params(
        [&] {
          auto y = swin::vit(x, tiny, stack);
          return sum(mul(y, y));
        },
        params, 1e-5, 8, seed)});
    lines.push_back({"vit.input", grad_check(
        [&](const Tensor<double>& xin) {
          auto y = swin::vit(xin, tiny, stack);
          return sum(mul(y, y));
        },
        x)});
  }
  {
    auto cell = cells::init_vitlstm_cell<double>(tiny, 3, 3, rng);
    auto x = randt({1, 3, 8, 8});
    cells::CellState<double> prev{randt({1, 3, 8, 8}), randt({1, 3, 8, 8}), Tensor<double>()};
    auto m_in = randt({1, 3, 8, 8});
    std::map<std::string, Tensor<double>> params;
    cells::visit_stm_cell(cell, "cell", [&](const std::string& n, Tensor<double>& t) {
      params.emplace(n, t);
    });
    lines.push_back({"vitlstm_cell", grad_check_params(
        [&] {
          auto out = cells::vitlstm_cell(x, prev, m_in, cell);
          return add(add(sum(mul(out.h, out.h)), sum(mul(out.c, out.c))),
                     sum(mul(out.m, out.m)));
        },
        params, 1e-5, 3, seed)});
  }
  {
    auto cell = cells::init_stlstm_cell<double>(3, 3, 3, rng);
    auto x = randt({1, 3, 6, 6});
    cells::CellState<double> prev{randt({1, 3, 6, 6}), randt({1, 3, 6, 6}), Tensor<double>()};
    auto m_in = randt({1, 3, 6, 6});
    std::map<std::string, Tensor<double>> params;
    cells::visit_stm_cell(cell, "cell", [&](const std::string& n, Tensor<double>& t) {
      params.emplace(n, t);
    });
    lines.push_back({"stlstm_cell", grad_check_params(
        [&] {
          auto out = cells::stlstm_cell(x, prev, m_in, cell);
          return add(add(sum(mul(out.h, out.h)), sum(mul(out.c, out.c))),
                     sum(mul(out.m, out.m)));
        },
        params, 1e-5, 12, seed)});
  }
  {
    auto cell = cells::init_convlstm_cell<double>(3, 3, 3, rng);
    auto x = randt({1, 3, 6, 6});
    auto h = randt({1, 3, 6, 6});
    auto c = randt({1, 3, 6, 6});
    std::map<std::string, Tensor<double>> params;
    cells::visit_convlstm_cell(cell, "cell", [&](const std::string& n, Tensor<double>& t) {
      params.emplace(n, t);
    });
    lines.push_back({"convlstm_cell", grad_check_params(
        [&] {
          auto out = cells::convlstm_cell(x, h, c, cell);
          return add(sum(mul(out.h, out.h)), sum(mul(out.c, out.c)));
        },
        params, 1e-5, 12, seed)});
  }
  {
    forecast::ModelConfig mcfg;
    mcfg.cell = forecast::CellKind::ViTLstm;
    mcfg.layers = 2;
    mcfg.grid = {3, 8, 8};
    mcfg.j = 2;
    mcfg.k = 2;
    mcfg.seed = seed;
    mcfg.swin = tiny;
    auto model = forecast::model_init<double>(mcfg);
    std::vector<Tensor<double>> frames{randt({1, 3, 8, 8}), randt({1, 3, 8, 8})};
    std::vector<Tensor<double>> targets{randt({1, 3, 8, 8}), randt({1, 3, 8, 8}),
                                        randt({1, 3, 8, 8})};
    lines.push_back({"model_k_step", grad_check_params(
        [&] {
          auto preds = forecast::model_forward(model, frames, forecast::RolloutMode::Training);
          return train::mse_loss<double>(preds, targets);
        },
        model.params, 1e-5, 2, seed)});
  }
  return lines;
}

int run_gradcheck(std::uint64_t seed) {
  const auto lines = gradcheck_suite(seed);
  bool ok = true;
  for (const auto& line : lines) {
    std::printf("%-14s max_rel_err=%.3e\n", line.component.c_str(), line.max_rel_err);
    ok = ok && line.max_rel_err < 1e-4;
  }
  std::cout << (ok ? "gradcheck: all components below 1e-4\n"
                   : "gradcheck: FAILED (component at or above 1e-4)\n");
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

int run_selftest() {
  FiniteCheckGuard checks(true);
  int failures = 0;
  auto check = [&](const char* name, bool pass, const std::string& detail = "") {
    if (pass) {
      std::cout << "[ok]   " << name << "\n";
    } else {
      ++failures;
      std::cout << "[FAIL] " << name << (detail.empty() ? "" : ": " + detail) << "\n";
    }
  };
  Rng rng(12345);
  auto randt = [&](Shape shape) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.normal(0.0, 1.0);
    return Tensor<double>::from_data(std::move(shape), std::move(data));
  };

  {  // matmul vs a straight triple loop
    auto a = randt({3, 4});
    auto b = randt({4, 5});
    auto c = matmul(a, b);
    double err = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        double acc = 0;
        for (std::size_t t = 0; t < 4; ++t) acc += a.at({i, t}) * b.at({t, j});
        err = std::max(err, std::abs(acc - c.at({i, j})));
      }
    }
    check("matmul matches triple-loop reference", err < 1e-12);
  }
  {  // softmax rows sum to one, large magnitudes included
    auto x = Tensor<double>::from_data({2, 3}, {1e4, 0, -1e4, 3, 3, 3});
    auto y = softmax_lastdim(x);
    double worst = 0;
    for (int r = 0; r < 2; ++r) {
      double s = 0;
      for (int j = 0; j < 3; ++j) s += y.at({std::size_t(r), std::size_t(j)});
      worst = std::max(worst, std::abs(s - 1.0));
    }
    check("softmax rows sum to 1", worst < 1e-6);
  }
  {  // idw against the direct formula at one probe cell
    std::vector<spectrum::SensorReading> readings{
        {"a", 0, 1, 1, -30}, {"b", 0, 5, 2, -60}, {"c", 0, 3, 7, -45}};
    auto frame = spectrum::idw_interpolate(readings, 8, 8, 2.0);
    const int r = 4, c = 4;
    double wsum = 0, vsum = 0;
    for (const auto& s : readings) {
      const double d2 = double(r - s.row) * (r - s.row) + double(c - s.col) * (c - s.col);
      const double w = 1.0 / d2;  // p=2
      wsum += w;
      vsum += w * s.power_dbm;
    }
    check("idw matches direct formula",
          std::abs(frame.values[r * 8 + c] - vsum / wsum) < 1e-9);
  }
  {  // encode anchors
    double rgb[3];
    spectrum::jet_map(0.0, rgb);
    const bool a = rgb[0] == 0 && rgb[1] == 0 && rgb[2] == 0.5;
    spectrum::jet_map(0.5, rgb);
    const bool b = rgb[0] == 0.5 && rgb[1] == 1.0 && rgb[2] == 0.5;
    spectrum::jet_map(1.0, rgb);
    const bool c = rgb[0] == 0.5 && rgb[1] == 0 && rgb[2] == 0;
    check("colormap anchor values", a && b && c);
  }
  {  // window partition and cyclic shift round trips
    auto tokens = randt({1, 16, 4});
    auto rt = swin::window_reverse(swin::window_partition(tokens, 4, 4, 2), 4, 4, 2);
    bool exact = true;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      exact = exact && tokens.data()[i] == rt.data()[i];
    }
    auto sh = swin::cyclic_shift(swin::cyclic_shift(tokens, 4, 4, 1, 1), 4, 4, -1, -1);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      exact = exact && tokens.data()[i] == sh.data()[i];
    }
    check("partition/shift round trips are bit-exact", exact);
  }
  {  // masked attention puts no mass across regions
    swin::SwinConfig cfg;
    cfg.patch_h = cfg.patch_w = 2;
    cfg.window = 2;
    cfg.shift = 1;
    cfg.heads = 2;
    cfg.embed_dim = 8;
    auto block = swin::init_block<double>(cfg, rng);
    auto tokens = randt({1, 16, 8});
    auto shifted = swin::cyclic_shift(tokens, 4, 4, 1, 1);
    auto win = swin::window_partition(shifted, 4, 4, 2);
    auto mask = swin::build_shift_mask<double>(4, 4, 2, 1);
    Tensor<double> attn;
    swin::msa_window(win, block, cfg, mask, &attn);
    double cross = 0;
    const auto av = attn.data();
    const auto mv = mask.data();
    // attn: [1, nW, h, 4, 4]; mask: [nW, 1, 4, 4]
    for (std::size_t w = 0; w < 4; ++w) {
      for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t i = 0; i < 16; ++i) {
          if (mv[w * 16 + i] != 0) cross = std::max(cross, av[(w * 2 + h) * 16 + i]);
        }
      }
    }
    check("shifted-window mask removes cross-region attention", cross < 1e-6);
  }
  {  // spg round trip
    const auto tmp = fs::temp_directory_path() / "spectracast_selftest.spg";
    spectrum::SpgData d;
    d.t = 2;
    d.c = 3;
    d.rows = 4;
    d.cols = 4;
    for (std::size_t i = 0; i < 96; ++i) d.values.push_back(static_cast<float>(rng.uniform()));
    spectrum::spg_write(tmp, d);
    auto back = spectrum::spg_read(tmp);
    bool exact = back.t == d.t && back.values.size() == d.values.size();
    if (exact) {
      for (std::size_t i = 0; i < d.values.size(); ++i) {
        exact = exact && back.values[i] == d.values[i];
      }
    }
    fs::remove(tmp);
    check("spg round trip is bit-exact", exact);
  }
  {  // synth determinism
    spectrum::SynthConfig scfg;
    scfg.rows = scfg.cols = 8;
    scfg.minutes = 5;
    scfg.seed = 99;
    auto r1 = spectrum::synth_generate(scfg);
    auto r2 = spectrum::synth_generate(scfg);
    bool same = r1.readings.size() == r2.readings.size();
    for (std::size_t i = 0; same && i < r1.truth.size(); ++i) {
      same = r1.truth[i].values == r2.truth[i].values;
    }
    check("synthetic generation is seed-deterministic", same);
  }
  {  // adam identities
    ParameterSet<double> params;
    params.emplace("p", Tensor<double>::from_data({3}, {1, 2, 3}));
    params.at("p").set_requires_grad(true);
    params.at("p").zero_grad();
    AdamState<double> st;
    adam_step(params, st);  // zero grads: no movement
    const auto& v = params.at("p").data();
    check("adam with zero gradient leaves parameters unchanged",
          v[0] == 1 && v[1] == 2 && v[2] == 3);
  }
  {  // zigzag memory identity on a tiny stacked model
    forecast::ModelConfig mcfg;
    mcfg.cell = forecast::CellKind::ViTLstm;
    mcfg.layers = 2;
    mcfg.grid = {3, 4, 4};
    mcfg.j = 2;
    mcfg.k = 2;
    mcfg.swin.patch_h = mcfg.swin.patch_w = 2;
    mcfg.swin.window = 2;
    mcfg.swin.shift = 1;
    mcfg.swin.heads = 2;
    mcfg.swin.embed_dim = 8;
    auto model = forecast::model_init<double>(mcfg);
    std::vector<Tensor<double>> frames{randt({1, 3, 4, 4}), randt({1, 3, 4, 4})};
    forecast::RolloutTrace<double> tracer;
    forecast::model_forward(model, frames, forecast::RolloutMode::Training, &tracer);
    bool same = tracer.m_in_bottom.size() == 3;
    for (std::size_t t = 1; same && t < tracer.m_in_bottom.size(); ++t) {
      const auto a = tracer.m_in_bottom[t].data();
      const auto b = tracer.m_out_top[t - 1].data();
      same = a.size() == b.size();
      for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i] == b[i];
    }
    check("layer-crossing memory routes top-to-bottom byte-for-byte", same);
  }
  {  // sequence windowing
    bool counted = spectrum::make_sequences(30, 10, 10).size() == 11 &&
                   spectrum::make_sequences(20, 10, 10).size() == 1;
    bool threw = false;
    try {
      spectrum::make_sequences(19, 10, 10);
    } catch (const DataError&) {
      threw = true;
    }
    check("sequence windowing counts and bounds", counted && threw);
  }

  if (failures == 0) {
    std::cout << "selftest: all checks passed\n";
    return 0;
  }
  std::cout << "selftest: " << failures << " check(s) FAILED\n";
  return 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"spatiotemporal radio-spectrum forecasting toolkit"};
  app.set_help_all_flag("--help-all");
  app.require_subcommand(1);
  std::vector<std::string> argv_copy;
  for (int i = 0; i < argc; ++i) argv_copy.emplace_back(argv[i]);

  SynthArgs synth;
  int synth_grid = 16;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic encoded dataset");
  synth_cmd->add_option("--grid", synth_grid, "square grid extent");
  synth_cmd->add_option("--rows", synth.cfg.rows, "grid rows (overrides --grid)");
  synth_cmd->add_option("--cols", synth.cfg.cols, "grid cols (overrides --grid)");
  synth_cmd->add_option("--sensors", synth.cfg.sensors, "number of sensors");
  synth_cmd->add_option("--minutes", synth.cfg.minutes, "number of time steps");
  synth_cmd->add_option("--seed", synth.cfg.seed, "generation seed");
  synth_cmd->add_option("--interval", synth.cfg.interval_min, "sampling interval (minutes)");
  synth_cmd->add_option("--baseline", synth.cfg.baseline_dbm, "baseline power (dBm)");
  synth_cmd->add_option("--diurnal-amp", synth.cfg.diurnal_amp_db, "sinusoid amplitude (dB)");
  synth_cmd->add_option("--period", synth.cfg.period_min, "sinusoid period (minutes)");
  synth_cmd->add_option("--noise", synth.cfg.noise_dbm, "noise stddev (dB)");
  synth_cmd->add_option("--emitters", synth.cfg.auto_emitters, "number of moving emitters");
  synth_cmd->add_option("--vmin", synth.enc.vmin, "encoding floor (dBm)");
  synth_cmd->add_option("--vmax", synth.enc.vmax, "encoding ceiling (dBm)");
  synth_cmd->add_option("--idw-power", synth.enc.idw_power, "inverse-distance power");
  synth_cmd->add_option("--out", synth.out, "output dataset (.spg)")->required();
  synth_cmd->add_option("--readings-csv", synth.readings_csv, "also dump readings CSV");
  synth_cmd->add_option("--truth-out", synth.truth_out, "also dump ground-truth field (.spg)");

  IngestArgs ingest;
  int ingest_grid = 16;
  auto* ingest_cmd = app.add_subcommand("ingest", "readings CSV -> encoded dataset");
  ingest_cmd->add_option("--csv", ingest.csv, "readings CSV")->required();
  ingest_cmd->add_option("--grid", ingest_grid, "square grid extent");
  ingest_cmd->add_option("--rows", ingest.rows, "grid rows (overrides --grid)");
  ingest_cmd->add_option("--cols", ingest.cols, "grid cols (overrides --grid)");
  ingest_cmd->add_option("--vmin", ingest.enc.vmin, "encoding floor (dBm)");
  ingest_cmd->add_option("--vmax", ingest.enc.vmax, "encoding ceiling (dBm)");
  ingest_cmd->add_option("--idw-power", ingest.enc.idw_power, "inverse-distance power");
  ingest_cmd->add_option("--interval", ingest.enc.interval, "expected interval (minutes)");
  ingest_cmd->add_option("--out", ingest.out, "output dataset (.spg)")->required();

  IngestArgs interp;
  int interp_grid = 16;
  auto* interp_cmd = app.add_subcommand("interpolate", "readings CSV -> dBm field frames");
  interp_cmd->add_option("--csv", interp.csv, "readings CSV")->required();
  interp_cmd->add_option("--grid", interp_grid, "square grid extent");
  interp_cmd->add_option("--rows", interp.rows, "grid rows (overrides --grid)");
  interp_cmd->add_option("--cols", interp.cols, "grid cols (overrides --grid)");
  interp_cmd->add_option("--idw-power", interp.enc.idw_power, "inverse-distance power");
  interp_cmd->add_option("--interval", interp.enc.interval, "expected interval (minutes)");
  interp_cmd->add_option("--out", interp.out, "output field file (.spg)")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a forecaster");
  train_cmd->add_option("--data", train_args.data, "dataset (.spg)")->required();
  train_cmd->add_option("--model", train_args.model_kind, "vitlstm|stlstm|convlstm");
  train_cmd->add_option("--config", train_args.model_config, "model config JSON");
  train_cmd->add_option("--train", train_args.train_config, "train config JSON");
  train_cmd->add_option("--out", train_args.out, "checkpoint directory")->required();
  train_cmd->add_option("--resume", train_args.resume, "resume from checkpoint directory");
  train_cmd->add_option("--iterations", train_args.iterations, "training iterations");
  train_cmd->add_option("--batch", train_args.batch, "mini-batch size");
  train_cmd->add_option("--lr", train_args.lr, "learning rate");
  train_cmd->add_option("--seed", train_args.seed, "model/train seed");
  train_cmd->add_option("--j", train_args.j, "context length");
  train_cmd->add_option("--k", train_args.k, "forecast length");
  train_cmd->add_option("--stride", train_args.stride, "sequence stride");
  train_cmd->add_option("--layers", train_args.layers, "stacked cell layers");
  train_cmd->add_option("--embed-dim", train_args.embed_dim, "attention embedding width");

  EvalArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "forecast one sample");
  predict_cmd->add_option("--ckpt", predict_args.ckpt, "checkpoint directory")->required();
  predict_cmd->add_option("--data", predict_args.data, "dataset (.spg)")->required();
  predict_cmd->add_option("--split", predict_args.split, "train|val|test");
  predict_cmd->add_option("--sample", predict_args.sample, "sample index within split");
  predict_cmd->add_option("--out", predict_args.out, "predicted frames (.spg)")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate on a split");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint directory")->required();
  eval_cmd->add_option("--data", eval_args.data, "dataset (.spg)")->required();
  eval_cmd->add_option("--report", eval_args.report, "report CSV path")->required();
  eval_cmd->add_option("--svg", eval_args.svg, "also emit SVG chart");
  eval_cmd->add_option("--split", eval_args.split, "train|val|test");

  CompareArgs compare_args;
  std::string compare_models;
  auto* compare_cmd = app.add_subcommand("compare", "train and compare cell kinds");
  compare_cmd->add_option("--data", compare_args.data, "dataset (.spg)")->required();
  compare_cmd->add_option("--train", compare_args.train_config, "train config JSON");
  compare_cmd->add_option("--models", compare_models, "comma-separated cell kinds");
  compare_cmd->add_option("--out", compare_args.out, "output directory")->required();
  compare_cmd->add_option("--iterations", compare_args.iterations, "training iterations");
  compare_cmd->add_option("--batch", compare_args.batch, "mini-batch size");
  compare_cmd->add_option("--lr", compare_args.lr, "learning rate");
  compare_cmd->add_option("--seed", compare_args.seed, "model/train seed");
  compare_cmd->add_option("--j", compare_args.j, "context length");
  compare_cmd->add_option("--k", compare_args.k, "forecast length");
  compare_cmd->add_option("--stride", compare_args.stride, "sequence stride");
  compare_cmd->add_option("--embed-dim", compare_args.embed_dim, "attention embedding width");

  std::uint64_t gradcheck_seed = 7;
  bool gradcheck_tiny = true;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck_cmd->add_flag("--tiny", gradcheck_tiny, "use tiny configurations (default)");
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "probe seed");

  auto* selftest_cmd = app.add_subcommand("selftest", "fast internal verification suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    const Precision prec = precision_from_env();
    if (synth_cmd->parsed()) {
      if (synth_cmd->count("--grid") && !synth_cmd->count("--rows")) synth.cfg.rows = synth_grid;
      if (synth_cmd->count("--grid") && !synth_cmd->count("--cols")) synth.cfg.cols = synth_grid;
      return run_synth(synth, argv_copy);
    }
    if (ingest_cmd->parsed()) {
      if (ingest_cmd->count("--grid") && !ingest_cmd->count("--rows")) ingest.rows = ingest_grid;
      if (ingest_cmd->count("--grid") && !ingest_cmd->count("--cols")) ingest.cols = ingest_grid;
      return run_ingest(ingest, "ingest", argv_copy);
    }
    if (interp_cmd->parsed()) {
      if (interp_cmd->count("--grid") && !interp_cmd->count("--rows")) interp.rows = interp_grid;
      if (interp_cmd->count("--grid") && !interp_cmd->count("--cols")) interp.cols = interp_grid;
      interp.raw_field = true;
      return run_ingest(interp, "interpolate", argv_copy);
    }
    if (train_cmd->parsed()) {
      return prec == Precision::F32 ? run_train<float>(train_args, argv_copy)
                                    : run_train<double>(train_args, argv_copy);
    }
    if (predict_cmd->parsed()) {
      return prec == Precision::F32 ? run_predict<float>(predict_args, argv_copy)
                                    : run_predict<double>(predict_args, argv_copy);
    }
    if (eval_cmd->parsed()) {
      return prec == Precision::F32 ? run_eval<float>(eval_args, argv_copy)
                                    : run_eval<double>(eval_args, argv_copy);
    }
    if (compare_cmd->parsed()) {
      if (!compare_models.empty()) {
        compare_args.models.clear();
        std::stringstream ss(compare_models);
        std::string item;
        while (std::getline(ss, item, ',')) {
          if (!item.empty()) compare_args.models.push_back(item);
        }
        if (compare_args.models.empty()) throw ConfigError("--models lists no cell kinds");
      }
      return prec == Precision::F32 ? run_compare<float>(compare_args, argv_copy)
                                    : run_compare<double>(compare_args, argv_copy);
    }
    if (gradcheck_cmd->parsed()) {
      (void)gradcheck_tiny;
      return run_gradcheck(gradcheck_seed);
    }
    if (selftest_cmd->parsed()) {
      return run_selftest();
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace spectracast::cli
