#pragma once

// Waveform rendering fallback: approximate mel-to-linear inversion followed
// by iterative phase reconstruction with momentum. Quality is deliberately
// modest; an external neural vocoder can be swapped in downstream by
// consuming the mel tensors instead.

#include <complex>
#include <vector>

#include "vts/config.hpp"
#include "vts/dsp.hpp"
#include "vts/fft.hpp"
#include "vts/rng.hpp"
#include "vts/tensor.hpp"
#include "vts/wav.hpp"

namespace vts::dsp {

/// Log-mel (T x n_mels) -> linear magnitude spectrogram (T x n_bins) via a
/// normalized filterbank transpose.
inline Tensor<double> mel_to_linear(const Tensor<float>& mel, const ModelConfig& cfg) {
  const int n_bins = cfg.frame_size / 2 + 1;
  const Tensor<double> fb = mel_filterbank(cfg.n_mels, cfg.frame_size, cfg.sample_rate);
  std::vector<double> col_sum(static_cast<std::size_t>(n_bins), 1e-8);
  for (int m = 0; m < cfg.n_mels; ++m)
    for (int b = 0; b < n_bins; ++b)
      col_sum[static_cast<std::size_t>(b)] += fb(static_cast<std::size_t>(m), static_cast<std::size_t>(b));

  const std::size_t frames = mel.dim(0);
  Tensor<double> mag({frames, static_cast<std::size_t>(n_bins)}, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (int b = 0; b < n_bins; ++b) {
      double acc = 0;
      for (int m = 0; m < cfg.n_mels; ++m)
        acc += fb(static_cast<std::size_t>(m), static_cast<std::size_t>(b)) *
               std::exp(static_cast<double>(mel(t, static_cast<std::size_t>(m))));
      mag(t, static_cast<std::size_t>(b)) = acc / col_sum[static_cast<std::size_t>(b)];
    }
  return mag;
}

namespace detail {

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

/// Windowed overlap-add inverse of the centered STFT used by extract_mel.
inline std::vector<double> istft(const std::vector<std::vector<std::complex<double>>>& spec,
                                 const ModelConfig& cfg, std::size_t out_len) {
  const int n = cfg.frame_size, hop = cfg.hop_size;
  const auto window = hann_window(n);
  std::vector<double> acc(out_len + static_cast<std::size_t>(n), 0.0);
  std::vector<double> norm(out_len + static_cast<std::size_t>(n), 1e-9);
  for (std::size_t t = 0; t < spec.size(); ++t) {
    const auto frame = irfft(spec[t], static_cast<std::size_t>(n));
    const std::int64_t start = static_cast<std::int64_t>(t) * hop - n / 2;
    for (int i = 0; i < n; ++i) {
      const std::int64_t at = start + i;
      if (at < 0 || at >= static_cast<std::int64_t>(out_len)) continue;
      acc[static_cast<std::size_t>(at)] += frame[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
      norm[static_cast<std::size_t>(at)] += window[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    }
  }
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = acc[i] / norm[i];
  return out;
}

inline std::vector<std::vector<std::complex<double>>> stft(const std::vector<double>& x,
                                                           const ModelConfig& cfg, std::size_t frames) {
  const int n = cfg.frame_size, hop = cfg.hop_size;
  const auto window = hann_window(n);
  std::vector<std::vector<std::complex<double>>> out(frames);
  std::vector<double> frame(static_cast<std::size_t>(n));
  for (std::size_t t = 0; t < frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * hop - n / 2;
    for (int i = 0; i < n; ++i) {
      const std::int64_t at = start + i;
      frame[static_cast<std::size_t>(i)] = (at >= 0 && at < static_cast<std::int64_t>(x.size()))
                                               ? x[static_cast<std::size_t>(at)] * window[static_cast<std::size_t>(i)]
                                               : 0.0;
    }
    out[t] = rfft(frame);
  }
  return out;
}

}  // namespace detail

/// Iterative phase reconstruction from a linear magnitude spectrogram.
inline Waveform phase_reconstruct(const Tensor<double>& mag, const ModelConfig& cfg, int iterations = 32,
                                  std::uint64_t seed = 0) {
  const std::size_t frames = mag.dim(0), bins = mag.dim(1);
  const std::size_t out_len = frames * static_cast<std::size_t>(cfg.hop_size);
  Rng rng(derive_seed(seed, 0x6f1));

  std::vector<std::vector<std::complex<double>>> spec(frames, std::vector<std::complex<double>>(bins));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t b = 0; b < bins; ++b) {
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      spec[t][b] = std::polar(mag(t, b), phase);
    }

  const double momentum = 0.9;
  std::vector<std::vector<std::complex<double>>> prev;
  for (int it = 0; it < iterations; ++it) {
    const auto x = detail::istft(spec, cfg, out_len);
    auto est = detail::stft(x, cfg, frames);
    if (!prev.empty())
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t b = 0; b < bins; ++b)
          est[t][b] -= momentum / (1.0 + momentum) * prev[t][b];
    prev = est;
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t b = 0; b < bins; ++b) {
        const double a = std::abs(est[t][b]);
        spec[t][b] = a > 1e-12 ? est[t][b] / a * mag(t, b) : std::complex<double>(mag(t, b), 0.0);
      }
  }

  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples = detail::istft(spec, cfg, out_len);
  double peak = 0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.95)
    for (double& s : w.samples) s *= 0.95 / peak;
  return w;
}

inline Waveform mel_to_waveform(const Tensor<float>& mel, const ModelConfig& cfg, int iterations = 32,
                                std::uint64_t seed = 0) {
  return phase_reconstruct(mel_to_linear(mel, cfg), cfg, iterations, seed);
}

}  // namespace vts::dsp
