// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory layout:
//   config.json  - model configuration + precision tag
//   params.blob  - parameter tensors (blob format)
//   optim.blob   - Adam moments; step/hyperparameters in the blob extra
// Training resumed from a checkpoint replays the uninterrupted run exactly
// (in the 32-bit default precision, which matches the on-disk scalar width).

#pragma once

#include <filesystem>
#include <string>

#include "spectracast/adam.hpp"
#include "spectracast/blob.hpp"
#include "spectracast/forecaster.hpp"

namespace spectracast::forecast {

// Non-template helpers defined in model_config.cpp.
void write_checkpoint_config(const std::filesystem::path& path, const ModelConfig& cfg,
                             const std::string& precision);
struct CheckpointConfig {
  ModelConfig model;
  std::string precision;
};
CheckpointConfig read_checkpoint_config(const std::filesystem::path& path);
std::string adam_extra_json(const AdamConfig& cfg, std::int64_t step);
void parse_adam_extra(const std::string& text, AdamConfig& cfg, std::int64_t& step);

template <class T>
void checkpoint_save(const std::filesystem::path& dir, const Forecaster<T>& model,
                     const AdamState<T>* opt = nullptr) {
  std::filesystem::create_directories(dir);
  write_checkpoint_config(dir / "config.json", model.cfg,
                          std::is_same_v<T, float> ? "f32" : "f64");
  BlobMap params;
  for (const auto& [name, t] : model.params) {
    BlobTensor bt;
    bt.shape = t.shape();
    bt.data.assign(t.data().begin(), t.data().end());
    params.emplace(name, std::move(bt));
  }
  blob_write(dir / "params.blob", params);
  if (opt) {
    BlobMap moments;
    for (const auto& [name, m] : opt->m) {
      BlobTensor bt;
      bt.shape = {m.size()};
      bt.data.assign(m.begin(), m.end());
      moments.emplace("m." + name, std::move(bt));
    }
    for (const auto& [name, v] : opt->v) {
      BlobTensor bt;
      bt.shape = {v.size()};
      bt.data.assign(v.begin(), v.end());
      moments.emplace("v." + name, std::move(bt));
    }
    blob_write(dir / "optim.blob", moments, adam_extra_json(opt->cfg, opt->step));
  }
}

template <class T>
struct Checkpoint {
  Forecaster<T> model;
  AdamState<T> opt;
  bool has_opt = false;
};

template <class T>
Checkpoint<T> checkpoint_load(const std::filesystem::path& dir) {
  const auto cfg_file = read_checkpoint_config(dir / "config.json");
  Checkpoint<T> ck;
  // Build the parameter structure, then overwrite every tensor from disk.
  ck.model = model_init<T>(cfg_file.model);
  const BlobFile params = blob_read(dir / "params.blob");
  for (auto& [name, t] : ck.model.params) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end()) {
      throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    }
    if (it->second.shape != t.shape()) {
      throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                            shape_str(it->second.shape) + ", model expects " +
                            shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.data[i]);
  }
  for (const auto& [name, bt] : params.tensors) {
    if (!ck.model.params.count(name)) {
      throw CheckpointError("checkpoint holds unknown tensor '" + name + "'");
    }
  }
  const auto optim_path = dir / "optim.blob";
  if (std::filesystem::exists(optim_path)) {
    const BlobFile optim = blob_read(optim_path);
    parse_adam_extra(optim.extra_json, ck.opt.cfg, ck.opt.step);
    for (const auto& [key, bt] : optim.tensors) {
      if (key.size() < 3 || key[1] != '.') {
        throw CheckpointError("optimizer blob holds unrecognized key '" + key + "'");
      }
      const std::string name = key.substr(2);
      auto pit = ck.model.params.find(name);
      if (pit == ck.model.params.end()) {
        throw CheckpointError("optimizer state for unknown parameter '" + name + "'");
      }
      if (bt.data.size() != pit->second.size()) {
        throw CheckpointError("optimizer moment for '" + name + "' has wrong extent");
      }
      std::vector<T> buf(bt.data.size());
      for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<T>(bt.data[i]);
      if (key[0] == 'm') {
        ck.opt.m[name] = std::move(buf);
      } else if (key[0] == 'v') {
        ck.opt.v[name] = std::move(buf);
      } else {
        throw CheckpointError("optimizer blob holds unrecognized key '" + key + "'");
      }
    }
    ck.has_opt = true;
  }
  return ck;
}

}  // namespace spectracast::forecast
