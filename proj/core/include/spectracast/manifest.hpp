// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Every artifact-producing command writes one run manifest next to its
// outputs: the resolved configuration snapshot plus enough bookkeeping to
// re-run the command and reproduce the primary outputs byte for byte.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace spectracast::cli {

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_json = "{}";  // resolved settings, one JSON object
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> inputs, outputs;
  std::string tool_version;
  std::string precision;
  double duration_seconds = 0.0;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace spectracast::cli
