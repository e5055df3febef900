// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectracast/blob.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "spectracast/errors.hpp"

namespace spectracast {

namespace {

using json = nlohmann::json;

constexpr const char* kBlobFormat = "spectracast-blob-v1";

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

void put_f32le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32le(out, bits);
}

float get_f32le(const unsigned char* p) {
  const std::uint32_t bits = get_u32le(p);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void blob_write(const std::filesystem::path& path, const BlobMap& tensors,
                const std::string& extra_json) {
  json manifest;
  manifest["format"] = kBlobFormat;
  try {
    manifest["extra"] = json::parse(extra_json);
  } catch (const json::exception& e) {
    throw FormatError(std::string("blob: extra metadata is not valid JSON: ") + e.what());
  }
  json tens = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (shape_numel(t.shape) != t.data.size()) {
      throw DimensionError("blob: tensor '" + name + "' shape/data mismatch");
    }
    json entry;
    entry["shape"] = t.shape;
    entry["offset"] = offset;
    entry["count"] = t.data.size();
    tens[name] = entry;
    offset += t.data.size() * 4;
  }
  manifest["tensors"] = tens;

  std::string payload;
  payload.reserve(static_cast<std::size_t>(offset));
  for (const auto& [name, t] : tensors) {
    for (const float v : t.data) put_f32le(payload, v);
  }

  const std::string mstr = manifest.dump();
  std::string out;
  put_u32le(out, static_cast<std::uint32_t>(mstr.size()));
  out += mstr;
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("blob: cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("blob: short write to '" + path.string() + "'");
}

BlobFile blob_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("blob: cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4) throw FormatError("blob: file too short for manifest length");
  const std::uint32_t mlen = get_u32le(p);
  if (bytes.size() < 4 + static_cast<std::size_t>(mlen)) {
    throw FormatError("blob: truncated manifest");
  }
  json manifest;
  try {
    manifest = json::parse(bytes.substr(4, mlen));
  } catch (const json::exception& e) {
    throw FormatError(std::string("blob: bad manifest JSON: ") + e.what());
  }
  if (manifest.value("format", "") != kBlobFormat) {
    throw FormatError("blob: unknown format tag");
  }
  const std::size_t payload_off = 4 + mlen;
  const std::size_t payload_len = bytes.size() - payload_off;

  BlobFile result;
  result.extra_json = manifest.contains("extra") ? manifest["extra"].dump() : "{}";
  std::size_t expected_payload = 0;
  for (const auto& [name, entry] : manifest["tensors"].items()) {
    BlobTensor t;
    t.shape = entry["shape"].get<Shape>();
    const std::uint64_t offset = entry["offset"].get<std::uint64_t>();
    const std::uint64_t count = entry["count"].get<std::uint64_t>();
    if (shape_numel(t.shape) != count) {
      throw FormatError("blob: tensor '" + name + "' count disagrees with shape");
    }
    if (offset + count * 4 > payload_len) {
      throw FormatError("blob: tensor '" + name + "' extends past end of file");
    }
    t.data.resize(count);
    const unsigned char* src = p + payload_off + offset;
    for (std::uint64_t i = 0; i < count; ++i) t.data[i] = get_f32le(src + i * 4);
    expected_payload = std::max(expected_payload, static_cast<std::size_t>(offset + count * 4));
    result.tensors.emplace(name, std::move(t));
  }
  if (expected_payload != payload_len) {
    throw FormatError("blob: payload length " + std::to_string(payload_len) +
                      " disagrees with manifest total " + std::to_string(expected_payload));
  }
  return result;
}

}  // namespace spectracast
