#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vts/common.hpp"

namespace vts {

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 22050;
};

namespace detail {

inline std::uint32_t rd_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8);
}

}  // namespace detail

/// Read a PCM 16-bit mono WAV file. Any other encoding is rejected rather
/// than converted.
inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path, 0);

  Waveform w;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = detail::rd_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw FormatError("truncated wav chunk: " + path, static_cast<std::int64_t>(pos));
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError("short fmt chunk", static_cast<std::int64_t>(body));
      const std::uint16_t format = detail::rd_u16(bytes.data() + body);
      const std::uint16_t channels = detail::rd_u16(bytes.data() + body + 2);
      const std::uint32_t rate = detail::rd_u32(bytes.data() + body + 4);
      const std::uint16_t bits = detail::rd_u16(bytes.data() + body + 14);
      if (format != 1 || bits != 16) throw DataError("wav must be PCM 16-bit: " + path);
      if (channels != 1) throw DataError("wav must be mono: " + path);
      w.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      const std::size_t n = len / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(detail::rd_u16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<double>(v) / 32768.0;
      }
      have_data = true;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || !have_data) throw FormatError("wav missing fmt or data chunk: " + path);
  return w;
}

/// Write PCM 16-bit mono. Samples are clamped to [-1, 1].
inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write wav file: " + path);
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
  };
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  f.write("RIFF", 4);
  put_u32(36 + data_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(w.sample_rate));
  put_u32(static_cast<std::uint32_t>(w.sample_rate * 2));
  put_u16(2);
  put_u16(16);
  f.write("data", 4);
  put_u32(data_len);
  for (double s : w.samples) {
    double c = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
    auto v = static_cast<std::int16_t>(std::lrint(c * 32767.0));
    put_u16(static_cast<std::uint16_t>(v));
  }
}

}  // namespace vts
