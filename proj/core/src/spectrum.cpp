// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectracast/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spectracast/rng.hpp"

namespace spectracast::spectrum {

namespace {

using json = nlohmann::json;

constexpr const char* kCsvHeader = "sensor_id,t_min,row,col,power_dbm";
constexpr char kSpgMagic[4] = {'S', 'P', 'G', '1'};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

ReadingSeries group_readings(std::vector<SensorReading> readings, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw ConfigError("grid extents must be positive");
  std::set<std::pair<std::string, std::int64_t>> seen;
  for (const auto& r : readings) {
    if (r.row < 0 || r.row >= rows || r.col < 0 || r.col >= cols) {
      throw ValidationError("reading from sensor '" + r.sensor_id + "' at t=" +
                            std::to_string(r.t_min) + " has position (" + std::to_string(r.row) +
                            "," + std::to_string(r.col) + ") outside grid " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!std::isfinite(r.power_dbm)) {
      throw ValidationError("reading from sensor '" + r.sensor_id + "' at t=" +
                            std::to_string(r.t_min) + " has non-finite power");
    }
    if (!seen.insert({r.sensor_id, r.t_min}).second) {
      throw ValidationError("duplicate reading for sensor '" + r.sensor_id + "' at t=" +
                            std::to_string(r.t_min));
    }
  }
  std::map<std::int64_t, std::vector<SensorReading>> by_t;
  for (auto& r : readings) by_t[r.t_min].push_back(std::move(r));
  ReadingSeries series;
  series.rows = rows;
  series.cols = cols;
  for (auto& [t, group] : by_t) series.frames.push_back({t, std::move(group)});
  return series;
}

ReadingSeries ingest_readings_csv(const std::filesystem::path& path, int rows, int cols) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open readings file '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line)) throw ParseError("readings file is empty (missing header)");
  if (strip_cr(line) != kCsvHeader) {
    throw ParseError("line 1: expected header '" + std::string(kCsvHeader) + "'");
  }
  std::vector<SensorReading> readings;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    }
    SensorReading r;
    r.sensor_id = fields[0];
    if (r.sensor_id.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty sensor_id");
    }
    try {
      std::size_t pos = 0;
      r.t_min = std::stoll(fields[1], &pos);
      if (pos != fields[1].size()) throw std::invalid_argument("trailing");
      r.row = std::stoi(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("trailing");
      r.col = std::stoi(fields[3], &pos);
      if (pos != fields[3].size()) throw std::invalid_argument("trailing");
      r.power_dbm = std::stod(fields[4], &pos);
      if (pos != fields[4].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed field in '" + line + "'");
    }
    readings.push_back(std::move(r));
  }
  return group_readings(std::move(readings), rows, cols);
}

void write_readings_csv(const std::filesystem::path& path,
                        std::span<const SensorReading> readings) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << kCsvHeader << "\n";
  char buf[64];
  for (const auto& r : readings) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.power_dbm);
    f << r.sensor_id << ',' << r.t_min << ',' << r.row << ',' << r.col << ',' << buf << "\n";
  }
  if (!f) throw IoError("short write to '" + path.string() + "'");
}

SpectrumFrame idw_interpolate(std::span<const SensorReading> readings, int rows, int cols,
                              double power, std::int64_t t_min) {
  if (readings.empty()) throw DataError("idw_interpolate: no readings for frame");
  if (power <= 0.0) throw ConfigError("idw_interpolate: power must be positive");
  if (rows <= 0 || cols <= 0) throw ConfigError("idw_interpolate: grid extents must be positive");

  // Canonical order makes the accumulation independent of caller order.
  std::vector<const SensorReading*> sorted;
  sorted.reserve(readings.size());
  for (const auto& r : readings) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const SensorReading* a, const SensorReading* b) {
    return std::tie(a->row, a->col, a->sensor_id) < std::tie(b->row, b->col, b->sensor_id);
  });

  SpectrumFrame frame;
  frame.t_min = t_min;
  frame.rows = rows;
  frame.cols = cols;
  frame.values.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double exact_sum = 0.0;
      int exact_count = 0;
      double wsum = 0.0, vsum = 0.0;
      for (const auto* s : sorted) {
        const double dr = static_cast<double>(r - s->row);
        const double dc = static_cast<double>(c - s->col);
        const double d2 = dr * dr + dc * dc;
        if (d2 == 0.0) {
          exact_sum += s->power_dbm;
          ++exact_count;
        } else {
          const double w = std::pow(std::sqrt(d2), -power);
          wsum += w;
          vsum += w * s->power_dbm;
        }
      }
      frame.values[static_cast<std::size_t>(r) * cols + c] =
          exact_count > 0 ? exact_sum / exact_count : vsum / wsum;
    }
  }
  return frame;
}

void jet_map(double u, double rgb[3]) {
  u = std::min(1.0, std::max(0.0, u));
  auto tri = [](double x) { return std::min(1.0, std::max(0.0, x)); };
  rgb[0] = tri(1.5 - std::abs(4.0 * u - 3.0));
  rgb[1] = tri(1.5 - std::abs(4.0 * u - 2.0));
  rgb[2] = tri(1.5 - std::abs(4.0 * u - 1.0));
}

EncodedFrame jet_encode(const SpectrumFrame& frame, double vmin_dbm, double vmax_dbm) {
  if (!(vmin_dbm < vmax_dbm)) {
    throw ConfigError("jet_encode: vmin must be strictly below vmax");
  }
  EncodedFrame out;
  out.rows = frame.rows;
  out.cols = frame.cols;
  const std::size_t n = frame.values.size();
  out.channels.resize(3 * n);
  const double inv_range = 1.0 / (vmax_dbm - vmin_dbm);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (frame.values[i] - vmin_dbm) * inv_range;
    double rgb[3];
    jet_map(u, rgb);
    out.channels[i] = static_cast<float>(rgb[0]);
    out.channels[n + i] = static_cast<float>(rgb[1]);
    out.channels[2 * n + i] = static_cast<float>(rgb[2]);
  }
  return out;
}

std::vector<std::size_t> make_sequences(std::size_t t, int j, int k, int stride) {
  if (j < 1 || k < 1) throw ConfigError("make_sequences: j and k must be >= 1");
  if (stride < 1) throw ConfigError("make_sequences: stride must be >= 1");
  const std::size_t span = static_cast<std::size_t>(j) + k;
  if (t < span) {
    throw DataError("make_sequences: need at least " + std::to_string(span) + " frames, have " +
                    std::to_string(t));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + span <= t; s += stride) starts.push_back(s);
  return starts;
}

SynthResult synth_generate(const SynthConfig& cfg) {
  if (cfg.rows <= 0 || cfg.cols <= 0) throw ConfigError("synth: grid extents must be positive");
  if (cfg.sensors < 1) throw ConfigError("synth: need at least one sensor");
  if (cfg.sensors > cfg.rows * cfg.cols) throw ConfigError("synth: more sensors than grid cells");
  if (cfg.minutes < 1) throw ConfigError("synth: need at least one time step");
  if (cfg.interval_min < 1) throw ConfigError("synth: interval must be >= 1 minute");
  if (cfg.period_min <= 0) throw ConfigError("synth: diurnal period must be positive");

  // Independent seeded streams so changing one knob does not shift the others.
  Rng rng_sensors(mix_seed(cfg.seed, 2));
  Rng rng_emitters(mix_seed(cfg.seed, 3));
  Rng rng_noise(mix_seed(cfg.seed, 1));

  SynthResult result;
  std::set<std::pair<int, int>> taken;
  while (static_cast<int>(result.sensor_positions.size()) < cfg.sensors) {
    const int r = static_cast<int>(rng_sensors.uniform_index(cfg.rows));
    const int c = static_cast<int>(rng_sensors.uniform_index(cfg.cols));
    if (taken.insert({r, c}).second) result.sensor_positions.emplace_back(r, c);
  }

  std::vector<SynthEmitter> emitters = cfg.emitters;
  if (emitters.empty()) {
    for (int i = 0; i < cfg.auto_emitters; ++i) {
      SynthEmitter e;
      e.amp_db = rng_emitters.uniform(15.0, 30.0);
      e.sigma = rng_emitters.uniform(std::max(1.0, cfg.rows / 10.0), std::max(2.0, cfg.rows / 5.0));
      e.center_row = rng_emitters.uniform(0.0, cfg.rows - 1.0);
      e.center_col = rng_emitters.uniform(0.0, cfg.cols - 1.0);
      e.orbit_radius = rng_emitters.uniform(0.0, cfg.rows / 4.0);
      e.orbit_period_min = rng_emitters.uniform(60.0, 180.0);
      e.phase = rng_emitters.uniform(0.0, 2.0 * M_PI);
      emitters.push_back(e);
    }
  }

  result.truth.reserve(cfg.minutes);
  for (std::int64_t step = 0; step < cfg.minutes; ++step) {
    const std::int64_t t = step * cfg.interval_min;
    SpectrumFrame frame;
    frame.t_min = t;
    frame.rows = cfg.rows;
    frame.cols = cfg.cols;
    frame.values.resize(static_cast<std::size_t>(cfg.rows) * cfg.cols);
    const double diurnal =
        cfg.diurnal_amp_db * std::sin(2.0 * M_PI * static_cast<double>(t) / cfg.period_min);
    for (int r = 0; r < cfg.rows; ++r) {
      for (int c = 0; c < cfg.cols; ++c) {
        double v = cfg.baseline_dbm + diurnal;
        for (const auto& e : emitters) {
          const double ang = 2.0 * M_PI * static_cast<double>(t) / e.orbit_period_min + e.phase;
          const double er = e.center_row + e.orbit_radius * std::sin(ang);
          const double ec = e.center_col + e.orbit_radius * std::cos(ang);
          const double d2 = (r - er) * (r - er) + (c - ec) * (c - ec);
          v += e.amp_db * std::exp(-d2 / (2.0 * e.sigma * e.sigma));
        }
        if (cfg.noise_dbm > 0.0) v += cfg.noise_dbm * rng_noise.normal();
        frame.values[static_cast<std::size_t>(r) * cfg.cols + c] = v;
      }
    }
    for (std::size_t s = 0; s < result.sensor_positions.size(); ++s) {
      const auto [sr, sc] = result.sensor_positions[s];
      SensorReading reading;
      reading.sensor_id = "s" + std::to_string(s);
      reading.t_min = t;
      reading.row = sr;
      reading.col = sc;
      reading.power_dbm = frame.values[static_cast<std::size_t>(sr) * cfg.cols + sc];
      result.readings.push_back(std::move(reading));
    }
    result.truth.push_back(std::move(frame));
  }
  return result;
}

// ---------------------------------------------------------------------------
// SPG io
// ---------------------------------------------------------------------------

namespace {

void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

json meta_to_json(const SpgMeta& m) {
  json j;
  j["interval_min"] = m.interval_min;
  j["vmin_dbm"] = m.vmin_dbm;
  j["vmax_dbm"] = m.vmax_dbm;
  j["seed"] = m.seed;
  j["kind"] = m.kind;
  return j;
}

SpgMeta meta_from_json(const json& j) {
  SpgMeta m;
  m.interval_min = j.value("interval_min", 1);
  m.vmin_dbm = j.value("vmin_dbm", -110.0);
  m.vmax_dbm = j.value("vmax_dbm", -10.0);
  m.seed = j.value("seed", std::uint64_t(0));
  m.kind = j.value("kind", "jet-encoded");
  return m;
}

}  // namespace

void spg_write(const std::filesystem::path& path, const SpgData& d) {
  const std::uint64_t count =
      std::uint64_t(d.t) * d.c * d.rows * d.cols;
  if (d.values.size() != count) {
    throw DimensionError("spg_write: header claims " + std::to_string(count) +
                         " scalars, payload has " + std::to_string(d.values.size()));
  }
  std::string out;
  out.append(kSpgMagic, 4);
  put_u32le(out, d.t);
  put_u32le(out, d.c);
  put_u32le(out, d.rows);
  put_u32le(out, d.cols);
  put_u32le(out, 0);  // reserved
  const std::string meta = meta_to_json(d.meta).dump();
  put_u32le(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  out.reserve(out.size() + d.values.size() * 4);
  for (const float v : d.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32le(out, bits);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("spg_write: cannot open '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("spg_write: short write to '" + path.string() + "'");
}

SpgData spg_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("spg_read: cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kSpgMagic, 4) != 0) {
    throw FormatError("spg_read: bad magic (not an SPG1 file)");
  }
  SpgData d;
  d.t = get_u32le(p + 4);
  d.c = get_u32le(p + 8);
  d.rows = get_u32le(p + 12);
  d.cols = get_u32le(p + 16);
  const std::uint32_t reserved = get_u32le(p + 20);
  if (reserved != 0) throw FormatError("spg_read: nonzero reserved field");
  const std::uint64_t count = std::uint64_t(d.t) * d.c * d.rows * d.cols;
  if (count > (std::uint64_t(1) << 34)) {
    throw FormatError("spg_read: extents overflow sanity bound");
  }
  if (bytes.size() < 28) throw FormatError("spg_read: truncated header");
  const std::uint32_t mlen = get_u32le(p + 24);
  const std::size_t meta_off = 28;
  if (bytes.size() < meta_off + mlen) throw FormatError("spg_read: truncated metadata");
  try {
    d.meta = meta_from_json(json::parse(bytes.substr(meta_off, mlen)));
  } catch (const json::exception& e) {
    throw FormatError(std::string("spg_read: bad metadata JSON: ") + e.what());
  }
  const std::size_t payload_off = meta_off + mlen;
  const std::size_t expected = static_cast<std::size_t>(count) * 4;
  if (bytes.size() - payload_off < expected) {
    throw FormatError("spg_read: truncated payload (header claims more data than file holds)");
  }
  if (bytes.size() - payload_off > expected) {
    throw FormatError("spg_read: trailing bytes after payload");
  }
  d.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get_u32le(p + payload_off + i * 4);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    d.values[i] = v;
  }
  return d;
}

DatasetSplit split_frames(std::size_t t, const SplitRatio& ratio) {
  if (ratio.train < 1 || ratio.val < 0 || ratio.test < 0) {
    throw ConfigError("split_frames: invalid ratio");
  }
  const std::size_t total = static_cast<std::size_t>(ratio.train) + ratio.val + ratio.test;
  DatasetSplit s;
  s.train = {0, t * ratio.train / total};
  s.val = {s.train.end, t * (ratio.train + ratio.val) / total};
  s.test = {s.val.end, t};
  return s;
}

SequenceDataset make_dataset(SpgData data, int j, int k, int stride, const SplitRatio& ratio) {
  SequenceDataset ds;
  ds.data = std::move(data);
  ds.j = j;
  ds.k = k;
  ds.stride = stride;
  ds.split = split_frames(ds.data.t, ratio);
  auto window = [&](const FrameRange& r) {
    std::vector<std::size_t> starts;
    if (r.size() >= static_cast<std::size_t>(j) + k) {
      for (const auto s : make_sequences(r.size(), j, k, stride)) starts.push_back(r.begin + s);
    }
    return starts;
  };
  ds.train_starts = window(ds.split.train);
  ds.val_starts = window(ds.split.val);
  ds.test_starts = window(ds.split.test);
  if (ds.train_starts.empty()) {
    throw DataError("make_dataset: training range has no full J+K window (need " +
                    std::to_string(j + k) + " frames, train range has " +
                    std::to_string(ds.split.train.size()) + ")");
  }
  return ds;
}

}  // namespace spectracast::spectrum
