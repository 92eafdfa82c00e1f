#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vts/common.hpp"
#include "vts/config.hpp"
#include "vts/fft.hpp"
#include "vts/rng.hpp"
#include "vts/tensor.hpp"
#include "vts/wav.hpp"

namespace vts::dsp {

// ---------------------------------------------------------------------------
// Mel filterbank and spectrogram extraction
// ---------------------------------------------------------------------------

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular mel filterbank, (n_mels x n_bins), spanning 0..sr/2.
inline Tensor<double> mel_filterbank(int n_mels, int frame_size, int sample_rate) {
  const int n_bins = frame_size / 2 + 1;
  Tensor<double> fb({static_cast<std::size_t>(n_mels), static_cast<std::size_t>(n_bins)}, 0.0);
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  const double bin_hz = static_cast<double>(sample_rate) / frame_size;
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = b * bin_hz;
      double w = 0.0;
      if (f > lo && f < hi) w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb(static_cast<std::size_t>(m), static_cast<std::size_t>(b)) = w;
    }
  }
  return fb;
}

/// Center frequency (Hz) of each mel filter; used by tests to predict the
/// dominant bin for a pure tone.
inline std::vector<double> mel_center_frequencies(int n_mels, int sample_rate) {
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<std::size_t>(n_mels));
  for (int m = 0; m < n_mels; ++m)
    centers[static_cast<std::size_t>(m)] = mel_to_hz(mel_max * (m + 1.0) / (n_mels + 1.0));
  return centers;
}

/// Log-mel spectrogram, (mel_frames x n_mels). The frame count is pinned by
/// the config: longer audio is truncated at the frame horizon, shorter audio
/// is treated as zero-padded (silence frames land on the floor clamp).
/// Values are natural-log of filterbank magnitudes clamped at mel_floor.
inline Tensor<float> extract_mel(const Waveform& w, const ModelConfig& cfg) {
  if (w.samples.empty()) throw DataError("extract_mel: empty waveform");
  if (w.sample_rate != cfg.sample_rate)
    throw DataError("extract_mel: sample rate " + std::to_string(w.sample_rate) +
                    " does not match configured " + std::to_string(cfg.sample_rate) +
                    " (resampling is not performed)");
  for (double s : w.samples)
    if (!std::isfinite(s)) throw DataError("extract_mel: non-finite sample in waveform");

  const int n = cfg.frame_size;
  const int hop = cfg.hop_size;
  const int frames = cfg.mel_frames;
  std::vector<double> window(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);

  const Tensor<double> fb = mel_filterbank(cfg.n_mels, n, cfg.sample_rate);
  const int n_bins = n / 2 + 1;
  Tensor<float> mel({static_cast<std::size_t>(frames), static_cast<std::size_t>(cfg.n_mels)});

  // Frames are centered: frame t covers samples [t*hop - n/2, t*hop + n/2).
  std::vector<double> frame(static_cast<std::size_t>(n));
  const auto len = static_cast<std::int64_t>(w.samples.size());
  for (int t = 0; t < frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * hop - n / 2;
    for (int i = 0; i < n; ++i) {
      const std::int64_t s = start + i;
      frame[static_cast<std::size_t>(i)] =
          (s >= 0 && s < len) ? w.samples[static_cast<std::size_t>(s)] * window[static_cast<std::size_t>(i)] : 0.0;
    }
    const auto spec = rfft(frame);
    for (int m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (int b = 0; b < n_bins; ++b)
        acc += fb(static_cast<std::size_t>(m), static_cast<std::size_t>(b)) * std::abs(spec[static_cast<std::size_t>(b)]);
      mel(static_cast<std::size_t>(t), static_cast<std::size_t>(m)) =
          static_cast<float>(std::log(std::max(acc, cfg.mel_floor)));
    }
  }
  return mel;
}

/// Mel of pure silence with the configured frame count: every bin at the
/// floor clamp. This is the background-encoder input at inference.
inline Tensor<float> silence_mel(const ModelConfig& cfg, int frames = -1) {
  if (frames < 0) frames = cfg.mel_frames;
  return Tensor<float>({static_cast<std::size_t>(frames), static_cast<std::size_t>(cfg.n_mels)},
                       static_cast<float>(std::log(cfg.mel_floor)));
}

// ---------------------------------------------------------------------------
// Energy masking
// ---------------------------------------------------------------------------

/// Linear-domain frame energies: sum over bins of exp(log-mel value).
template <class T>
std::vector<double> frame_energies(const Tensor<T>& mel) {
  const std::size_t frames = mel.dim(0), bins = mel.dim(1);
  std::vector<double> e(frames, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t b = 0; b < bins; ++b) e[t] += std::exp(static_cast<double>(mel(t, b)));
  return e;
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Replace every frame whose linear energy is strictly greater than the
/// clip median with the floor value in all bins; ties and quieter frames
/// pass through untouched.
template <class T>
Tensor<T> energy_mask(const Tensor<T>& mel, double mel_floor = 1e-5) {
  if (mel.rank() != 2 || mel.dim(0) < 1) throw ShapeError("energy_mask: need a (frames x bins) mel with >= 1 frame");
  const std::vector<double> e = frame_energies(mel);
  const double med = median_of(e);
  Tensor<T> out = mel;
  const auto floor_v = static_cast<T>(std::log(mel_floor));
  for (std::size_t t = 0; t < mel.dim(0); ++t)
    if (e[t] > med)
      for (std::size_t b = 0; b < mel.dim(1); ++b) out(t, b) = floor_v;
  return out;
}

// ---------------------------------------------------------------------------
// Random resampling: segment, stretch, shuffle
// ---------------------------------------------------------------------------

struct ResampleSpec {
  std::uint64_t seed = 0;
  int k_min = 2;
  int k_max = 8;
  double stretch_lo = 0.5;
  double stretch_hi = 1.5;

  static ResampleSpec from_config(const ModelConfig& m, std::uint64_t seed) {
    return ResampleSpec{seed, m.rs_k_min, m.rs_k_max, m.rs_stretch_lo, m.rs_stretch_hi};
  }
};

struct ResamplePlan {
  std::size_t in_len = 0;
  std::vector<std::pair<std::size_t, std::size_t>> segments;  // [begin, end)
  std::vector<double> factors;                                // per segment
  std::vector<std::size_t> perm;                              // segment emission order
};

/// Draw order is fixed: segment count, boundaries, stretch factors, permutation.
inline ResamplePlan draw_resample_plan(std::size_t len, Rng& rng, const ResampleSpec& spec) {
  if (len < static_cast<std::size_t>(spec.k_min))
    throw DataError("random_resample: input has " + std::to_string(len) + " frames, fewer than k_min=" +
                    std::to_string(spec.k_min));
  ResamplePlan plan;
  plan.in_len = len;
  const auto k_cap = static_cast<std::size_t>(spec.k_max);
  const std::size_t k_hi = std::min(len, k_cap);
  const auto k = static_cast<std::size_t>(
      rng.uniform_int(spec.k_min, static_cast<std::int64_t>(std::max<std::size_t>(k_hi, static_cast<std::size_t>(spec.k_min)))));

  // K-1 distinct interior cut points, uniform over {1..len-1}.
  std::vector<std::size_t> cuts;
  if (k > 1) {
    std::vector<std::size_t> all(len - 1);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i + 1;
    for (std::size_t i = 0; i < k - 1; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(all.size()) - 1));
      std::swap(all[i], all[j]);
    }
    cuts.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k - 1));
    std::sort(cuts.begin(), cuts.end());
  }
  std::size_t begin = 0;
  for (std::size_t c : cuts) {
    plan.segments.emplace_back(begin, c);
    begin = c;
  }
  plan.segments.emplace_back(begin, len);

  for (std::size_t i = 0; i < k; ++i) plan.factors.push_back(rng.uniform(spec.stretch_lo, spec.stretch_hi));

  plan.perm.resize(k);
  for (std::size_t i = 0; i < k; ++i) plan.perm[i] = i;
  rng.shuffle(plan.perm);
  return plan;
}

/// Sparse linear map realizing a plan: out[j] = w0*in[i0] + w1*in[i1].
/// Kept explicit so gradients can flow through the transform.
struct ResampleMap {
  struct Row {
    std::size_t i0 = 0, i1 = 0;
    double w0 = 1.0, w1 = 0.0;
  };
  std::size_t in_len = 0;
  std::vector<Row> rows;  // rows.size() == in_len (length restored)
};

inline ResampleMap plan_to_map(const ResamplePlan& plan) {
  std::vector<ResampleMap::Row> rows;
  for (std::size_t seg_idx : plan.perm) {
    const auto [b, e] = plan.segments[seg_idx];
    const std::size_t seg_len = e - b;
    const auto out_len = static_cast<std::size_t>(
        std::max<std::int64_t>(1, std::llround(static_cast<double>(seg_len) * plan.factors[seg_idx])));
    for (std::size_t j = 0; j < out_len; ++j) {
      // align-corners linear interpolation; out_len == seg_len is the identity
      double pos = out_len == 1 ? (seg_len - 1) / 2.0
                                : static_cast<double>(j) * (seg_len - 1) / static_cast<double>(out_len - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(lo);
      ResampleMap::Row r;
      r.i0 = b + lo;
      r.i1 = b + std::min(lo + 1, seg_len - 1);
      r.w0 = 1.0 - frac;
      r.w1 = frac;
      rows.push_back(r);
    }
  }
  // restore the input length: center-crop if longer, repeat the last frame if shorter
  ResampleMap map;
  map.in_len = plan.in_len;
  const std::size_t total = rows.size();
  if (total >= plan.in_len) {
    const std::size_t start = (total - plan.in_len) / 2;
    map.rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(start),
                    rows.begin() + static_cast<std::ptrdiff_t>(start + plan.in_len));
  } else {
    map.rows = rows;
    while (map.rows.size() < plan.in_len) map.rows.push_back(rows.back());
  }
  return map;
}

template <class T>
Tensor<T> apply_resample_map(const Tensor<T>& x, const ResampleMap& map) {
  if (x.rank() != 2 || x.dim(0) != map.in_len) throw ShapeError("apply_resample_map: length mismatch");
  const std::size_t channels = x.dim(1);
  Tensor<T> out({map.rows.size(), channels});
  for (std::size_t j = 0; j < map.rows.size(); ++j) {
    const auto& r = map.rows[j];
    for (std::size_t c = 0; c < channels; ++c) {
      // x0 + w1*(x1-x0): exact when the two source frames agree
      const double x0 = static_cast<double>(x(r.i0, c));
      const double x1 = static_cast<double>(x(r.i1, c));
      out(j, c) = static_cast<T>(x0 + r.w1 * (x1 - x0));
    }
  }
  return out;
}

/// Segment the time axis, stretch each segment, shuffle the segments, and
/// restore the original length. Channel dimension and output length are
/// preserved exactly; deterministic given spec.seed.
template <class T>
Tensor<T> random_resample(const Tensor<T>& x, const ResampleSpec& spec) {
  if (x.rank() != 2) throw ShapeError("random_resample: need a (time x channel) matrix");
  Rng rng(spec.seed);
  const ResamplePlan plan = draw_resample_plan(x.dim(0), rng, spec);
  return apply_resample_map(x, plan_to_map(plan));
}

// ---------------------------------------------------------------------------
// Time shift (misaligned negatives)
// ---------------------------------------------------------------------------

/// Circular shift forward by d frames: out[t] = in[(t - d) mod T].
template <class T>
Tensor<T> time_shift_by(const Tensor<T>& m, std::size_t d) {
  if (m.rank() != 2) throw ShapeError("time_shift: need a (frames x bins) matrix");
  const std::size_t frames = m.dim(0), bins = m.dim(1);
  Tensor<T> out({frames, bins});
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t src = (t + frames - d % frames) % frames;
    for (std::size_t b = 0; b < bins; ++b) out(t, b) = m(src, b);
  }
  return out;
}

/// Circular shift by a random amount d in [ceil(0.1 T), T - ceil(0.1 T)],
/// keeping the negative well away from alignment.
template <class T>
Tensor<T> time_shift(const Tensor<T>& m, std::uint64_t seed) {
  if (m.rank() != 2 || m.dim(0) < 10)
    throw DataError("time_shift: need at least 10 frames, got " + std::to_string(m.dim(0)));
  const std::size_t frames = m.dim(0);
  const auto lo = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(frames)));
  const std::size_t hi = frames - lo;
  Rng rng(seed);
  const auto d = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
  return time_shift_by(m, d);
}

}  // namespace vts::dsp
