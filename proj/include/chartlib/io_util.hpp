#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace chartlib::ioutil {

// On-disk formats are little-endian; this library targets LE hosts.
static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

inline void write_file(const std::filesystem::path& path, const void* data,
                       size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
void write_file(const std::filesystem::path& path, std::span<const T> values) {
  static_assert(std::is_trivially_copyable_v<T>);
  write_file(path, values.data(), values.size_bytes());
}

inline std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  const auto size = static_cast<size_t>(in.tellg());
  std::vector<uint8_t> buf(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("read failed: " + path.string());
  return buf;
}

// Reads a file whose payload must be exactly count elements of T.
template <typename T>
std::vector<T> read_array(const std::filesystem::path& path, size_t count) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bytes = read_file(path);
  if (bytes.size() != count * sizeof(T))
    throw std::runtime_error("payload size mismatch: " + path.string() +
                             " (expected " + std::to_string(count * sizeof(T)) +
                             " bytes, got " + std::to_string(bytes.size()) + ")");
  std::vector<T> out(count);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, text.data(), text.size());
}

inline std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace chartlib::ioutil
