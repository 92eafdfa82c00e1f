#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vts {

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError -> 2, DataError/FormatError/ShapeError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Bad or inconsistent input data (missing files, invalid audio, corpus
// violations such as a broken timebase ratio).
struct DataError : Error {
  using Error::Error;
};

// Malformed on-disk container. Carries the byte offset of the first
// offending field where known.
struct FormatError : Error {
  explicit FormatError(const std::string& what, std::int64_t offset = -1)
      : Error(offset >= 0 ? what + " (at byte offset " + std::to_string(offset) + ")" : what),
        byte_offset(offset) {}
  std::int64_t byte_offset = -1;
};

// Tensor dimension mismatch between operands or against a contract.
struct ShapeError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required (diverged training).
struct NumericError : Error {
  using Error::Error;
};

// FNV-1a, used for config and checkpoint fingerprints.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace vts
