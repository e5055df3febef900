// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "spectracast/checkpoint.hpp"
#include "spectracast/forecaster.hpp"

namespace spectracast::forecast {

namespace {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

json swin_to_json(const swin::SwinConfig& s) {
  json j;
  j["patch"] = json::array({s.patch_h, s.patch_w});
  j["window"] = s.window;
  j["shift"] = s.shift;
  j["heads"] = s.heads;
  j["embed_dim"] = s.embed_dim;
  j["mlp_ratio"] = s.mlp_ratio;
  return j;
}

swin::SwinConfig swin_from_json(const json& j) {
  reject_unknown_keys(j, {"patch", "window", "shift", "heads", "embed_dim", "mlp_ratio"},
                      "model config (swin)");
  swin::SwinConfig s;
  if (j.contains("patch")) {
    const auto& p = j["patch"];
    if (p.is_array() && p.size() == 2) {
      s.patch_h = p[0].get<int>();
      s.patch_w = p[1].get<int>();
    } else if (p.is_number_integer()) {
      s.patch_h = s.patch_w = p.get<int>();
    } else {
      throw ConfigError("model config: 'patch' must be an integer or a pair");
    }
  }
  s.window = j.value("window", s.window);
  s.shift = j.value("shift", j.contains("window") ? j["window"].get<int>() / 2 : s.shift);
  s.heads = j.value("heads", s.heads);
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.mlp_ratio = j.value("mlp_ratio", s.mlp_ratio);
  return s;
}

}  // namespace

std::string ModelConfig::to_json_string() const {
  json j;
  j["cell"] = to_string(cell);
  j["layers"] = layers;
  j["grid"] = {{"channels", grid.channels}, {"rows", grid.rows}, {"cols", grid.cols}};
  j["j"] = this->j;
  j["k"] = k;
  j["seed"] = seed;
  j["swin"] = swin_to_json(swin);
  j["conv_kernel"] = conv_kernel;
  j["hidden_multiplier"] = hidden_multiplier;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
  }
  reject_unknown_keys(
      j, {"cell", "layers", "grid", "j", "k", "seed", "swin", "conv_kernel", "hidden_multiplier"},
      "model config");
  ModelConfig cfg;
  if (j.contains("cell")) cfg.cell = cell_kind_from_string(j["cell"].get<std::string>());
  cfg.layers = j.value("layers", cfg.layers);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    reject_unknown_keys(g, {"channels", "rows", "cols"}, "model config (grid)");
    cfg.grid.channels = g.value("channels", cfg.grid.channels);
    cfg.grid.rows = g.value("rows", cfg.grid.rows);
    cfg.grid.cols = g.value("cols", cfg.grid.cols);
  }
  cfg.j = j.value("j", cfg.j);
  cfg.k = j.value("k", cfg.k);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("swin")) cfg.swin = swin_from_json(j["swin"]);
  cfg.conv_kernel = j.value("conv_kernel", cfg.conv_kernel);
  cfg.hidden_multiplier = j.value("hidden_multiplier", cfg.hidden_multiplier);
  return cfg;
}

void write_checkpoint_config(const std::filesystem::path& path, const ModelConfig& cfg,
                             const std::string& precision) {
  json j;
  j["format"] = "spectracast-checkpoint-v1";
  j["precision"] = precision;
  j["model"] = json::parse(cfg.to_json_string());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << j.dump(2) << "\n";
}

CheckpointConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw CheckpointError("missing checkpoint config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint config JSON: ") + e.what());
  }
  if (j.value("format", "") != "spectracast-checkpoint-v1") {
    throw CheckpointError("unknown checkpoint format tag");
  }
  CheckpointConfig out;
  out.precision = j.value("precision", "f32");
  out.model = ModelConfig::from_json_string(j["model"].dump());
  return out;
}

std::string adam_extra_json(const AdamConfig& cfg, std::int64_t step) {
  json j;
  j["step"] = step;
  j["lr"] = cfg.lr;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["eps"] = cfg.eps;
  return j.dump();
}

void parse_adam_extra(const std::string& text, AdamConfig& cfg, std::int64_t& step) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad optimizer metadata: ") + e.what());
  }
  step = j.value("step", std::int64_t(0));
  cfg.lr = j.value("lr", cfg.lr);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.eps = j.value("eps", cfg.eps);
}

}  // namespace spectracast::forecast
