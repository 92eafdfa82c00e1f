#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vts/common.hpp"
#include "vts/tensor.hpp"

namespace vts {

// Tensor container ('VSTF'), the interchange format for features, mels and
// checkpoint payloads. Layout, all little-endian:
//
//   offset 0   magic        4 bytes  'VSTF'
//   offset 4   version      u8       1
//   offset 5   dtype        u8       1 = float32 (the only defined dtype)
//   offset 6   ndim         u8       1..4
//   offset 7   pad          u8       0
//   offset 8   reserved     8 bytes  0 (pads the fixed header to 16 bytes)
//   offset 16  dims         ndim x u32
//   then       payload      row-major float32
//
// Readers validate every header field and report the byte offset of the
// first violation.

inline constexpr std::size_t kTensorFileHeaderBytes = 16;
inline constexpr std::uint8_t kTensorFileVersion = 1;
inline constexpr std::uint8_t kTensorFileDtypeF32 = 1;

namespace detail {

inline void append_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void append_f32(std::string& s, float v) {
  static_assert(sizeof(float) == 4);
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

}  // namespace detail

/// Serialize to the in-memory byte string (used directly when embedding
/// tensors into checkpoints).
template <class T>
std::string tensor_to_bytes(const Tensor<T>& t) {
  if (t.rank() < 1 || t.rank() > 4) throw FormatError("tensor rank must be 1..4, got " + std::to_string(t.rank()));
  std::string s;
  s.reserve(kTensorFileHeaderBytes + 4 * t.rank() + 4 * t.numel());
  s += "VSTF";
  s.push_back(static_cast<char>(kTensorFileVersion));
  s.push_back(static_cast<char>(kTensorFileDtypeF32));
  s.push_back(static_cast<char>(t.rank()));
  s.push_back(0);
  s.append(8, '\0');
  for (std::size_t d : t.shape()) detail::append_u32(s, static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < t.numel(); ++i) detail::append_f32(s, static_cast<float>(t[i]));
  return s;
}

template <class T = float>
Tensor<T> tensor_from_bytes(const char* p, std::size_t n, std::size_t base_offset = 0) {
  auto fail = [&](const std::string& what, std::size_t off) -> Tensor<T> {
    throw FormatError(what, static_cast<std::int64_t>(base_offset + off));
  };
  if (n < kTensorFileHeaderBytes) return fail("tensor file shorter than 16-byte header", 0);
  if (std::memcmp(p, "VSTF", 4) != 0) return fail("bad magic, expected 'VSTF'", 0);
  if (static_cast<std::uint8_t>(p[4]) != kTensorFileVersion)
    return fail("unsupported tensor file version " + std::to_string(int(static_cast<std::uint8_t>(p[4]))), 4);
  if (static_cast<std::uint8_t>(p[5]) != kTensorFileDtypeF32)
    return fail("unsupported dtype " + std::to_string(int(static_cast<std::uint8_t>(p[5]))) + ", expected 1 (float32)", 5);
  const std::size_t ndim = static_cast<std::uint8_t>(p[6]);
  if (ndim < 1 || ndim > 4) return fail("ndim must be 1..4, got " + std::to_string(ndim), 6);

  if (n < kTensorFileHeaderBytes + 4 * ndim) return fail("truncated dims", kTensorFileHeaderBytes);
  std::vector<std::size_t> shape(ndim);
  std::size_t numel = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    std::uint32_t d;
    std::memcpy(&d, p + kTensorFileHeaderBytes + 4 * i, 4);
    if (d == 0 || d > (1u << 30)) return fail("dimension " + std::to_string(i) + " out of range", kTensorFileHeaderBytes + 4 * i);
    shape[i] = d;
    numel *= d;
  }
  const std::size_t payload_off = kTensorFileHeaderBytes + 4 * ndim;
  if (n != payload_off + 4 * numel)
    return fail("payload size mismatch: expected " + std::to_string(payload_off + 4 * numel) +
                    " bytes total, got " + std::to_string(n),
                payload_off);

  Tensor<T> out(shape);
  for (std::size_t i = 0; i < numel; ++i) {
    float v;
    std::memcpy(&v, p + payload_off + 4 * i, 4);
    out[i] = static_cast<T>(v);
  }
  return out;
}

template <class T>
void write_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write tensor file: " + path);
  const std::string bytes = tensor_to_bytes(t);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("short write: " + path);
}

template <class T = float>
Tensor<T> read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open tensor file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return tensor_from_bytes<T>(bytes.data(), bytes.size());
}

}  // namespace vts
