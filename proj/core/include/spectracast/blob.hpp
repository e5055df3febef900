// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tensor blob files: a length-prefixed JSON manifest (parameter name ->
// shape and byte offset) followed by raw 32-bit little-endian scalars in
// row-major order.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spectracast/tensor.hpp"

namespace spectracast {

struct BlobTensor {
  Shape shape;
  std::vector<float> data;
};

using BlobMap = std::map<std::string, BlobTensor>;

struct BlobFile {
  BlobMap tensors;
  std::string extra_json;  // free-form sidecar (optimizer step, hyperparameters)
};

void blob_write(const std::filesystem::path& path, const BlobMap& tensors,
                const std::string& extra_json = "{}");

BlobFile blob_read(const std::filesystem::path& path);

}  // namespace spectracast
