// Training loop and metrics: hand-checked values, determinism, divergence
// handling, the single-sample overfit probe, evaluation, and reports.

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spectracast/checkpoint.hpp"
#include "spectracast/training.hpp"
#include "support/test_util.hpp"

using namespace spectracast;
using namespace spectracast::train;
using namespace spectracast::forecast;
using spectracast::spectrum::SpgData;
using testutil::randt;
using testutil::tiny_swin;

namespace fs = std::filesystem;

namespace {

// Synthetic readings -> interpolated fields -> encoded frames -> dataset.
spectrum::SequenceDataset make_synth_dataset(int grid, int minutes, int j, int k,
                                             std::uint64_t seed) {
  spectrum::SynthConfig cfg;
  cfg.rows = cfg.cols = grid;
  cfg.minutes = minutes;
  cfg.seed = seed;
  auto synth = spectrum::synth_generate(cfg);
  auto series = spectrum::group_readings(synth.readings, grid, grid);
  SpgData data;
  data.t = static_cast<std::uint32_t>(series.frames.size());
  data.c = 3;
  data.rows = data.cols = static_cast<std::uint32_t>(grid);
  data.meta.seed = seed;
  for (const auto& rf : series.frames) {
    auto field = spectrum::idw_interpolate(rf.readings, grid, grid, 2.0, rf.t_min);
    auto enc = spectrum::jet_encode(field, -110.0, -10.0);
    data.values.insert(data.values.end(), enc.channels.begin(), enc.channels.end());
  }
  return spectrum::make_dataset(std::move(data), j, k);
}

ModelConfig probe_model(CellKind kind, int grid, int j, int k, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.cell = kind;
  cfg.layers = 1;
  cfg.grid = {3, grid, grid};
  cfg.j = j;
  cfg.k = k;
  cfg.seed = seed;
  cfg.swin = tiny_swin();
  cfg.conv_kernel = 3;
  return cfg;
}

}  // namespace

TEST_CASE("mse: exact zero, uniform error, and loop oracle") {
  auto a = Tensor<double>::full({2, 3, 4}, 0.7);
  CHECK(mse_loss(a, a).item() == 0.0);

  auto b = Tensor<double>::full({2, 3, 4}, 0.6);
  CHECK(mse_loss(a, b).item() == doctest::Approx(0.01).epsilon(1e-9));

  Rng rng(1);
  auto p = randt({3, 5}, rng);
  auto t = randt({3, 5}, rng);
  double direct = 0.0;
  for (std::size_t i = 0; i < 15; ++i) {
    const double d = p.data()[i] - t.data()[i];
    direct += d * d;
  }
  direct /= 15.0;
  CHECK(mse_loss(p, t).item() == doctest::Approx(direct).epsilon(1e-9));

  CHECK_THROWS_AS(mse_loss(a, Tensor<double>::zeros({2, 3})), DimensionError);
}

TEST_CASE("psnr: 20 dB at uniform 0.1 error, infinity at zero, log identity") {
  CHECK(psnr(0.01) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(std::isinf(psnr(0.0)));
  // halving a uniform error quarters the mse and adds 20*log10(2) dB
  const double gain = psnr(0.0025) - psnr(0.01);
  CHECK(gain == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));
}

TEST_CASE("rmse squared equals mse per horizon to 1e-9") {
  auto ds = make_synth_dataset(4, 40, 2, 2, 5);
  auto model = model_init<double>(probe_model(CellKind::ConvLstm, 4, 2, 2, 5));
  auto rep = evaluate(model, ds);
  REQUIRE(rep.horizons == 2);
  for (int h = 0; h < rep.horizons; ++h) {
    CHECK(rep.rmse[h] * rep.rmse[h] == doctest::Approx(rep.mse[h]).epsilon(1e-9));
  }
}

TEST_CASE("evaluate: perfect forecaster scores zero error and infinite psnr") {
  auto ds = make_synth_dataset(4, 40, 2, 2, 6);
  auto oracle = [&](std::span<const std::size_t> starts) {
    std::vector<Tensor<double>> preds;
    for (int h = 0; h < 2; ++h) preds.push_back(spectrum::frames_batch<double>(ds.data, starts, 2 + h));
    return preds;
  };
  auto rep = evaluate_batches<double>(ds, SplitSel::Test, 2, 2, "oracle", oracle);
  for (int h = 0; h < 2; ++h) {
    CHECK(rep.mse[h] == 0.0);
    CHECK(std::isinf(rep.psnr_db[h]));
  }
}

TEST_CASE("evaluate: constant predictor on a constant field scores zero") {
  SpgData data;
  data.t = 12;
  data.c = 1;
  data.rows = data.cols = 2;
  data.values.assign(12 * 4, 0.5f);
  auto ds = spectrum::make_dataset(std::move(data), 1, 1);
  auto rep = evaluate_batches<double>(
      ds, SplitSel::Test, 1, 1, "constant",
      [&](std::span<const std::size_t> starts) {
        std::vector<Tensor<double>> preds{
            Tensor<double>::full({starts.size(), 1, 2, 2}, 0.5)};
        return preds;
      });
  CHECK(rep.mse[0] == 0.0);
}

TEST_CASE("report averages equal the mean of the per-horizon columns") {
  auto ds = make_synth_dataset(4, 60, 2, 3, 7);
  auto model = model_init<double>(probe_model(CellKind::ConvLstm, 4, 2, 3, 7));
  auto rep = evaluate(model, ds);
  double m = 0, r = 0, p = 0;
  for (int h = 0; h < rep.horizons; ++h) {
    m += rep.mse[h];
    r += rep.rmse[h];
    p += rep.psnr_db[h];
  }
  CHECK(rep.avg_mse == doctest::Approx(m / rep.horizons).epsilon(1e-9));
  CHECK(rep.avg_rmse == doctest::Approx(r / rep.horizons).epsilon(1e-9));
  CHECK(rep.avg_psnr == doctest::Approx(p / rep.horizons).epsilon(1e-9));
}

TEST_CASE("evaluate is deterministic and does not mutate parameters") {
  auto ds = make_synth_dataset(4, 40, 2, 2, 8);
  auto model = model_init<double>(probe_model(CellKind::ConvLstm, 4, 2, 2, 8));
  std::vector<double> before;
  for (const auto& [name, t] : model.params) {
    before.insert(before.end(), t.data().begin(), t.data().end());
  }
  auto r1 = evaluate(model, ds);
  auto r2 = evaluate(model, ds);
  CHECK(r1.mse == r2.mse);
  CHECK(r1.psnr_db == r2.psnr_db);
  std::vector<double> after;
  for (const auto& [name, t] : model.params) {
    after.insert(after.end(), t.data().begin(), t.data().end());
  }
  CHECK(before == after);
}

TEST_CASE("evaluate rejects mismatched dataset geometry") {
  auto ds = make_synth_dataset(4, 40, 2, 2, 9);
  auto model = model_init<double>(probe_model(CellKind::ConvLstm, 8, 2, 2, 9));
  CHECK_THROWS_AS(evaluate(model, ds), CheckpointError);
}

TEST_CASE("lr zero leaves the loss trace constant") {
  auto ds = make_synth_dataset(4, 40, 2, 2, 10);
  TrainConfig tcfg;
  tcfg.lr = 1e-30;  // validation requires lr > 0; effectively zero motion
  tcfg.batch = 2;
  tcfg.iterations = 4;
  tcfg.seed = 3;
  auto result = train<double>(ds, probe_model(CellKind::ConvLstm, 4, 2, 2, 10), tcfg);
  // the same batch at the same parameters yields the same loss each epoch
  REQUIRE(result.history.size() == 4);
  const std::size_t ipe = batches_per_epoch(ds.train_starts.size(), tcfg.batch);
  for (std::size_t i = ipe; i < result.history.size(); ++i) {
    // compare against the same position one epoch earlier; shuffles differ
    // per epoch, so compare only when the batch repeats (single-batch epochs)
    if (ipe == 1) {
      CHECK(result.history[i].train_loss ==
            doctest::Approx(result.history[i - 1].train_loss).epsilon(1e-9));
    }
  }
  // with an explicit lr=0 the optimizer is the identity (checked at the
  // parameter level in the adam suite); here the config guard fires instead
  TrainConfig bad = tcfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(train<double>(ds, probe_model(CellKind::ConvLstm, 4, 2, 2, 10), bad),
                  ConfigError);
}

TEST_CASE("fixed seeds give bit-identical loss traces") {
  auto ds = make_synth_dataset(4, 50, 2, 2, 11);
  TrainConfig tcfg;
  tcfg.batch = 2;
  tcfg.iterations = 6;
  tcfg.seed = 21;
  auto a = train<float>(ds, probe_model(CellKind::ConvLstm, 4, 2, 2, 11), tcfg);
  auto b = train<float>(ds, probe_model(CellKind::ConvLstm, 4, 2, 2, 11), tcfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
  }
  for (const auto& [name, t] : a.model.params) {
    CHECK(testutil::bit_equal(t.data(), b.model.params.at(name).data()));
  }
}

TEST_CASE("training aborts with the iteration index when the loss diverges") {
  SpgData data;
  data.t = 12;
  data.c = 1;
  data.rows = data.cols = 2;
  data.values.assign(12 * 4, 3e30f);  // squared errors overflow to +inf
  auto ds = spectrum::make_dataset(std::move(data), 1, 1);
  ModelConfig mcfg;
  mcfg.cell = CellKind::ConvLstm;
  mcfg.layers = 1;
  mcfg.grid = {1, 2, 2};
  mcfg.j = 1;
  mcfg.k = 1;
  mcfg.conv_kernel = 3;
  TrainConfig tcfg;
  tcfg.batch = 1;
  tcfg.iterations = 3;
  CHECK_THROWS_WITH_AS(train<float>(ds, mcfg, tcfg), doctest::Contains("iteration 0"),
                       NumericError);
}

TEST_CASE("overfit probe: one repeated sample drops below 10% of initial loss") {
  auto ds = make_synth_dataset(8, 40, 2, 2, 12);
  ds.train_starts = {ds.train_starts.front()};  // a single repeated sample
  ds.val_starts.clear();
  auto mcfg = probe_model(CellKind::ViTLstm, 8, 2, 2, 12);
  TrainConfig tcfg;
  tcfg.batch = 1;
  tcfg.iterations = 300;
  tcfg.seed = 1;
  double initial = -1.0;
  double best = std::numeric_limits<double>::infinity();
  TrainOptions<float> opts;
  opts.stop_after = [&](int iter, double loss) {
    if (initial < 0) initial = loss;
    best = std::min(best, loss);
    return best < 0.1 * initial;
  };
  auto result = train<float>(ds, mcfg, tcfg, std::move(opts));
  CAPTURE(initial);
  CAPTURE(best);
  CHECK(best < 0.1 * initial);
  CHECK(result.iterations_run <= 300);
}

TEST_CASE("resumed training replays the uninterrupted run exactly") {
  auto ds = make_synth_dataset(4, 50, 2, 2, 13);
  auto mcfg = probe_model(CellKind::ConvLstm, 4, 2, 2, 13);
  TrainConfig tcfg;
  tcfg.batch = 2;
  tcfg.iterations = 6;
  tcfg.seed = 5;

  auto full = train<float>(ds, mcfg, tcfg);

  TrainConfig half = tcfg;
  half.iterations = 3;
  auto first = train<float>(ds, mcfg, half);
  const auto dir = fs::temp_directory_path() / "sc_resume_test";
  fs::remove_all(dir);
  checkpoint_save(dir, first.model, &first.opt);

  auto ck = checkpoint_load<float>(dir);
  TrainOptions<float> opts;
  opts.initial_model = std::move(ck.model);
  opts.initial_opt = std::move(ck.opt);
  opts.start_iteration = static_cast<int>(opts.initial_opt->step);
  auto second = train<float>(ds, mcfg, tcfg, std::move(opts));

  // the resumed tail must match the uninterrupted trace bit for bit
  REQUIRE(second.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(second.history[i].train_loss == full.history[3 + i].train_loss);
  }
  for (const auto& [name, t] : full.model.params) {
    CHECK(testutil::bit_equal(t.data(), second.model.params.at(name).data()));
  }
  fs::remove_all(dir);
}

TEST_CASE("early stopping honors the patience window") {
  auto ds = make_synth_dataset(4, 60, 2, 2, 14);
  TrainConfig tcfg;
  tcfg.batch = 4;
  tcfg.iterations = 60;
  tcfg.seed = 2;
  tcfg.patience = 1;
  tcfg.lr = 10.0;  // hostile rate so validation loss stops improving quickly
  auto result = train<float>(ds, probe_model(CellKind::ConvLstm, 4, 2, 2, 14), tcfg);
  CHECK(result.early_stopped);
  CHECK(result.iterations_run < 60);
}

TEST_CASE("report csv emits, parses back, and round-trips values") {
  EvalReport a;
  a.model = "vitlstm";
  a.horizons = 3;
  a.mse = {0.01, 0.02, 0.04};
  a.rmse = {0.1, std::sqrt(0.02), 0.2};
  a.psnr_db = {20.0, psnr(0.02), psnr(0.04)};
  a.avg_mse = (0.01 + 0.02 + 0.04) / 3;
  a.avg_rmse = (a.rmse[0] + a.rmse[1] + a.rmse[2]) / 3;
  a.avg_psnr = (a.psnr_db[0] + a.psnr_db[1] + a.psnr_db[2]) / 3;
  EvalReport b = a;
  b.model = "convlstm";
  for (auto& v : b.mse) v *= 2;
  for (int h = 0; h < 3; ++h) {
    b.rmse[h] = std::sqrt(b.mse[h]);
    b.psnr_db[h] = psnr(b.mse[h]);
  }

  std::vector<EvalReport> reports{a, b};
  const auto csv = report_csv_string(reports);
  // 2 models x (3 data rows + 1 average row) + header
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  auto parsed = report_parse_csv_string(csv);
  REQUIRE(parsed.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(parsed[i].model == reports[i].model);
    REQUIRE(parsed[i].horizons == 3);
    for (int h = 0; h < 3; ++h) {
      CHECK(parsed[i].mse[h] == doctest::Approx(reports[i].mse[h]).epsilon(1e-9));
      CHECK(parsed[i].rmse[h] == doctest::Approx(reports[i].rmse[h]).epsilon(1e-9));
      CHECK(parsed[i].psnr_db[h] == doctest::Approx(reports[i].psnr_db[h]).epsilon(1e-9));
    }
    CHECK(parsed[i].avg_mse == doctest::Approx(reports[i].avg_mse).epsilon(1e-9));
  }

  // psnr ordering reverses mse ordering at every horizon
  for (int h = 0; h < 3; ++h) {
    CHECK(a.mse[h] < b.mse[h]);
    CHECK(a.psnr_db[h] > b.psnr_db[h]);
  }

  // infinity round-trips through the sentinel text
  EvalReport perfect = a;
  perfect.model = "oracle";
  perfect.mse = {0.0, 0.0, 0.0};
  perfect.rmse = {0.0, 0.0, 0.0};
  perfect.psnr_db = {psnr(0), psnr(0), psnr(0)};
  std::vector<EvalReport> with_inf{perfect};
  auto back = report_parse_csv_string(report_csv_string(with_inf));
  CHECK(std::isinf(back[0].psnr_db[0]));

  std::vector<EvalReport> mismatched{a};
  mismatched.push_back(a);
  mismatched[1].horizons = 2;
  mismatched[1].mse.pop_back();
  mismatched[1].rmse.pop_back();
  mismatched[1].psnr_db.pop_back();
  CHECK_THROWS_AS(report_csv_string(mismatched), ReportError);
}

TEST_CASE("report svg is well-formed and includes every model") {
  EvalReport a;
  a.model = "vitlstm";
  a.horizons = 2;
  a.mse = {0.01, 0.02};
  a.rmse = {0.1, std::sqrt(0.02)};
  a.psnr_db = {20.0, psnr(0.02)};
  a.avg_mse = 0.015;
  a.avg_rmse = 0.12;
  a.avg_psnr = 18.5;
  std::vector<EvalReport> reports{a};
  const auto svg = report_svg_string(reports);
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("vitlstm") != std::string::npos);
  // crude well-formedness: every '<' has a matching '>'
  int depth = 0;
  for (const char c : svg) {
    if (c == '<') ++depth;
    if (c == '>') --depth;
    CHECK(depth >= 0);
    CHECK(depth <= 1);
  }
  CHECK(depth == 0);
}

TEST_CASE("train config json round trip and unknown keys") {
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.iterations = 77;
  cfg.patience = 3;
  auto back = TrainConfig::from_json_string(cfg.to_json_string());
  CHECK(back.lr == doctest::Approx(0.01));
  CHECK(back.iterations == 77);
  CHECK(back.patience == 3);
  CHECK_THROWS_AS(TrainConfig::from_json_string(R"({"learning_rate":0.1})"), ConfigError);
}

TEST_CASE("loss history csv carries per-epoch validation losses") {
  std::vector<LossPoint> history{{0, 0.5, 0.0, false}, {1, 0.4, 0.45, true}};
  const auto path = fs::temp_directory_path() / "sc_loss.csv";
  loss_history_write_csv(history, path);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "iteration,train_loss,val_loss");
  std::getline(f, line);
  CHECK(line.rfind("0,0.5", 0) == 0);
  CHECK(line.back() == ',');  // no validation entry on iteration 0
  std::getline(f, line);
  CHECK(line.find("0.45") != std::string::npos);
  fs::remove(path);
}
