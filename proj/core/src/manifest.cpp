// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectracast/manifest.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "spectracast/errors.hpp"

namespace spectracast::cli {

namespace {
using json = nlohmann::json;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  try {
    j["config"] = json::parse(m.config_json);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: config snapshot is not valid JSON: ") + e.what());
  }
  j["seeds"] = m.seeds;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["tool_version"] = m.tool_version;
  j["precision"] = m.precision;
  j["duration_seconds"] = m.duration_seconds;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("manifest: cannot write '" + path.string() + "'");
  f << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("manifest: cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: bad JSON: ") + e.what());
  }
  RunManifest m;
  m.command = j.value("command", "");
  if (j.contains("argv")) m.argv = j["argv"].get<std::vector<std::string>>();
  m.config_json = j.contains("config") ? j["config"].dump() : "{}";
  if (j.contains("seeds")) {
    m.seeds = j["seeds"].get<std::map<std::string, std::uint64_t>>();
  }
  if (j.contains("inputs")) m.inputs = j["inputs"].get<std::vector<std::string>>();
  if (j.contains("outputs")) m.outputs = j["outputs"].get<std::vector<std::string>>();
  m.tool_version = j.value("tool_version", "");
  m.precision = j.value("precision", "");
  m.duration_seconds = j.value("duration_seconds", 0.0);
  return m;
}

}  // namespace spectracast::cli
