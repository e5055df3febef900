// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace spectracast {

// Base for all library errors. `category()` is the stable machine-parsable
// tag the CLI prints; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

// Tensor extents disagree with an operation's contract.
struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

// A configuration value is invalid (divisibility, ranges, unknown keys).
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

// Input data violates a dataset-level precondition.
struct DataError : Error {
  explicit DataError(const std::string& m) : Error("data", m) {}
};

// A binary artifact is malformed (bad magic, truncation, overflow).
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error("format", m) {}
};

// Text input could not be parsed.
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error("parse", m) {}
};

// Parsed input is syntactically fine but semantically out of range.
struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error("validation", m) {}
};

// Non-finite value detected at an op boundary, or numeric divergence.
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

// An API contract was violated by the caller (e.g. backward on non-scalar).
struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error("contract", m) {}
};

// Checkpoint contents disagree with the model configuration.
struct CheckpointError : Error {
  explicit CheckpointError(const std::string& m) : Error("checkpoint", m) {}
};

// Evaluation reports cannot be combined or emitted.
struct ReportError : Error {
  explicit ReportError(const std::string& m) : Error("report", m) {}
};

// Filesystem-level failure (open/read/write).
struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace spectracast
