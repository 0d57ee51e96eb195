#pragma once

// Little-endian binary helpers shared by the store, snapshot and export
// writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "randproto/error.hpp"

namespace randproto::io {

template <typename T>
T byteswap_if_big(T value) noexcept {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <typename T>
void write_le(std::ostream& out, std::span<const T> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (T v : values) {
      const T le = byteswap_if_big(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof(T));
    }
  }
}

template <typename T>
void write_le(std::ostream& out, T value) {
  write_le(out, std::span<const T>(&value, 1));
}

template <typename T>
bool read_le(std::istream& in, std::span<T> values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size_bytes()));
  if (!in) return false;
  if constexpr (std::endian::native != std::endian::little) {
    for (T& v : values) v = byteswap_if_big(v);
  }
  return true;
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  return read_le(in, std::span<T>(&value, 1));
}

/// Writes via a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path path);
  ~AtomicFile();
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  std::ostream& stream() { return out_; }
  void commit();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace randproto::io
