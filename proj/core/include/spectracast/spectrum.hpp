// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0
//
// Spectrum-map construction: sensor readings -> interpolated dBm fields ->
// normalized 3-channel encoded frames -> windowed training sequences.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectracast/errors.hpp"
#include "spectracast/tensor.hpp"

namespace spectracast::spectrum {

// One timestamped received-signal-strength measurement at a grid cell.
struct SensorReading {
  std::string sensor_id;
  std::int64_t t_min = 0;  // whole minutes
  int row = 0;
  int col = 0;
  double power_dbm = 0.0;
};

struct ReadingFrame {
  std::int64_t t_min = 0;
  std::vector<SensorReading> readings;
};

// Readings grouped by timestamp, validated against the grid.
struct ReadingSeries {
  int rows = 0;
  int cols = 0;
  std::vector<ReadingFrame> frames;  // ascending t_min
};

// CSV schema: header `sensor_id,t_min,row,col,power_dbm`, one reading per line.
ReadingSeries ingest_readings_csv(const std::filesystem::path& path, int rows, int cols);
ReadingSeries group_readings(std::vector<SensorReading> readings, int rows, int cols);
void write_readings_csv(const std::filesystem::path& path,
                        std::span<const SensorReading> readings);

struct SpectrumFrame {
  std::int64_t t_min = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major dBm
};

// Inverse-distance weighting over the full grid. Distances are Euclidean in
// grid units; a cell at distance zero takes the sensor value exactly (the
// mean, if several sensors share the cell). Readings are re-ordered
// internally, so the result is independent of input order bit-for-bit.
SpectrumFrame idw_interpolate(std::span<const SensorReading> readings, int rows, int cols,
                              double power, std::int64_t t_min = 0);

// Normalized 3-channel encoding of one frame; all values in [0, 1].
struct EncodedFrame {
  int rows = 0;
  int cols = 0;
  std::vector<float> channels;  // [3][rows][cols]
};

// The classic piecewise-linear triangle colormap on u in [0,1]:
//   r = clamp(1.5 - |4u-3|), g = clamp(1.5 - |4u-2|), b = clamp(1.5 - |4u-1|)
void jet_map(double u, double rgb[3]);
EncodedFrame jet_encode(const SpectrumFrame& frame, double vmin_dbm, double vmax_dbm);

// Sliding-window sample starts over `t` frames: floor((t-j-k)/stride)+1 of
// them, chronological. Throws DataError when t < j+k.
std::vector<std::size_t> make_sequences(std::size_t t, int j, int k, int stride = 1);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SynthEmitter {
  double amp_db = 20.0;
  double sigma = 2.0;
  double center_row = 0.0;
  double center_col = 0.0;
  double orbit_radius = 0.0;
  double orbit_period_min = 120.0;
  double phase = 0.0;
};

struct SynthConfig {
  int rows = 16;
  int cols = 16;
  int sensors = 4;
  std::int64_t minutes = 200;
  std::uint64_t seed = 0;
  int interval_min = 1;
  double baseline_dbm = -90.0;
  double diurnal_amp_db = 10.0;
  double period_min = 120.0;
  double noise_dbm = 0.5;
  // When empty, `auto_emitters` emitters are drawn from the seed.
  std::vector<SynthEmitter> emitters;
  int auto_emitters = 2;
};

struct SynthResult {
  std::vector<SpectrumFrame> truth;
  std::vector<SensorReading> readings;
  std::vector<std::pair<int, int>> sensor_positions;
};

// Ground truth = baseline + diurnal sinusoid + moving Gaussian emitters +
// seeded noise; readings sample the field at the sensor cells. Same seed,
// same bytes.
SynthResult synth_generate(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// SPG frame files
// ---------------------------------------------------------------------------

struct SpgMeta {
  int interval_min = 1;
  double vmin_dbm = -110.0;
  double vmax_dbm = -10.0;
  std::uint64_t seed = 0;
  std::string kind = "jet-encoded";  // or "dbm-field"
};

struct SpgData {
  std::uint32_t t = 0, c = 0, rows = 0, cols = 0;
  SpgMeta meta;
  std::vector<float> values;  // (t, c, row, col) row-major

  std::size_t frame_size() const { return std::size_t(c) * rows * cols; }
  const float* frame(std::size_t ti) const { return values.data() + ti * frame_size(); }
};

// Layout: magic "SPG1"; u32le T, C, M, N, reserved=0; u32le metadata length +
// metadata JSON; T*C*M*N f32le scalars. Round trips are bit-exact.
void spg_write(const std::filesystem::path& path, const SpgData& data);
SpgData spg_read(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Chronological split and sequence dataset
// ---------------------------------------------------------------------------

struct SplitRatio {
  int train = 4, val = 1, test = 1;
};

struct FrameRange {
  std::size_t begin = 0, end = 0;  // half-open
  std::size_t size() const { return end - begin; }
};

// Frame-level chronological partition. Sequences are windowed within each
// range separately, so every train timestamp precedes every val timestamp
// precedes every test timestamp.
struct DatasetSplit {
  FrameRange train, val, test;
};

DatasetSplit split_frames(std::size_t t, const SplitRatio& ratio);

struct SequenceDataset {
  SpgData data;
  int j = 10, k = 10, stride = 1;
  DatasetSplit split;
  std::vector<std::size_t> train_starts, val_starts, test_starts;

  std::size_t sample_span() const { return static_cast<std::size_t>(j) + k; }
};

SequenceDataset make_dataset(SpgData data, int j, int k, int stride = 1,
                             const SplitRatio& ratio = {});

// Materializes frames[start + step] for each start in the batch as a
// [B, C, M, N] tensor of the requested scalar type.
template <class T>
Tensor<T> frames_batch(const SpgData& d, std::span<const std::size_t> starts, std::size_t step) {
  const std::size_t fsz = d.frame_size();
  std::vector<T> out(starts.size() * fsz);
  for (std::size_t b = 0; b < starts.size(); ++b) {
    const float* src = d.frame(starts[b] + step);
    T* dst = out.data() + b * fsz;
    for (std::size_t i = 0; i < fsz; ++i) dst[i] = static_cast<T>(src[i]);
  }
  return Tensor<T>::from_data({starts.size(), d.c, d.rows, d.cols}, std::move(out));
}

}  // namespace spectracast::spectrum
