#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sidekick/common.hpp"

namespace sidekick {

// All binary payloads are 32-bit float little-endian. We only target
// little-endian hosts; the manifest records the byte order explicitly.
static_assert(sizeof(float) == 4);

inline void write_file_bytes(const std::string& path, const void* data,
                             std::size_t n) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write(static_cast<const char*>(data), std::streamsize(n));
  if (!os) throw DataError("write failed: " + path);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw NotFoundError("file not found: " + path);
  auto size = is.tellg();
  is.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size), 0);
  is.read(reinterpret_cast<char*>(buf.data()), size);
  if (!is) throw DataError("read failed: " + path);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

inline std::string read_text_file(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

inline void write_f32(const std::string& path, const std::vector<float>& v) {
  write_file_bytes(path, v.data(), v.size() * sizeof(float));
}

inline std::vector<float> read_f32(const std::string& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() % sizeof(float) != 0)
    throw TruncatedPayloadError("payload size not a multiple of 4 bytes: " + path);
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

inline std::uint64_t file_checksum(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return fnv1a64(bytes.data(), bytes.size());
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory: " + dir);
}

}  // namespace sidekick
