#pragma once

// Objective evaluation: mel-cepstral-style distortion over log-mel frames,
// cosine timbre similarity on a deterministic spectral-envelope embedding,
// and onset detection scored against known event times.

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "vts/common.hpp"
#include "vts/dsp.hpp"
#include "vts/rng.hpp"
#include "vts/tensor.hpp"

namespace vts::metrics {

/// (10/ln 10) * mean over frames of sqrt(2 * sum_bins (a-b)^2), the standard
/// cepstral-distortion constant applied to log-mel frames of equal length.
inline double mcd(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mcd: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  const std::size_t frames = a.dim(0), bins = a.dim(1);
  double acc = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    double ss = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double d = static_cast<double>(a(t, k)) - b(t, k);
      ss += d * d;
    }
    acc += std::sqrt(2.0 * ss);
  }
  return 10.0 / std::log(10.0) * acc / static_cast<double>(frames);
}

inline double cosine_similarity(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("cosine_similarity: dimension mismatch");
  double dot = 0, nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx <= 1e-24 || ny <= 1e-24) throw DataError("cosine_similarity: undefined for a zero vector");
  return dot / (std::sqrt(nx) * std::sqrt(ny));
}

namespace detail {

/// Fixed orthonormal-row projection used by the timbre embedding; the seed
/// is a constant of the metric definition, not a run parameter.
inline const std::vector<std::vector<double>>& embedding_projection(std::size_t in_dim, std::size_t out_dim) {
  static std::map<std::pair<std::size_t, std::size_t>, std::vector<std::vector<double>>> cache;
  auto key = std::make_pair(in_dim, out_dim);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Rng rng(0x7e3b1a2cull);
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < out_dim; ++r) {
    std::vector<double> v(in_dim);
    for (auto& x : v) x = rng.normal();
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : rows) {
        double dot = 0;
        for (std::size_t i = 0; i < in_dim; ++i) dot += v[i] * u[i];
        for (std::size_t i = 0; i < in_dim; ++i) v[i] -= dot * u[i];
      }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(std::max(norm, 1e-12));
    for (auto& x : v) x /= norm;
    rows.push_back(std::move(v));
  }
  return cache.emplace(key, std::move(rows)).first->second;
}

}  // namespace detail

inline constexpr std::size_t kTimbreEmbeddingDim = 64;

/// Unit-norm spectral-envelope summary: per-bin mean of the loud frames
/// (those the energy mask would remove), mean-removed and projected to 64
/// dims by a fixed seeded orthonormal map. Frame order does not matter, so
/// the embedding is invariant to time shifts.
inline std::vector<double> timbre_embedding(const Tensor<float>& mel) {
  if (mel.rank() != 2 || mel.dim(0) < 1) throw ShapeError("timbre_embedding: need a (frames x bins) mel");
  const std::size_t frames = mel.dim(0), bins = mel.dim(1);
  const std::vector<double> e = dsp::frame_energies(mel);
  const double med = dsp::median_of(e);

  std::vector<double> envelope(bins, 0.0);
  std::size_t loud = 0;
  for (std::size_t t = 0; t < frames; ++t)
    if (e[t] > med) {
      ++loud;
      for (std::size_t k = 0; k < bins; ++k) envelope[k] += static_cast<double>(mel(t, k));
    }
  if (loud == 0) {
    // flat-energy clip: fall back to pooling every frame
    loud = frames;
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < bins; ++k) envelope[k] += static_cast<double>(mel(t, k));
  }
  double mean = 0;
  for (auto& v : envelope) {
    v /= static_cast<double>(loud);
    mean += v;
  }
  mean /= static_cast<double>(bins);
  double norm = 0;
  for (auto& v : envelope) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm > 1e-12)
    for (auto& v : envelope) v /= norm;

  const std::size_t out_dim = std::min<std::size_t>(kTimbreEmbeddingDim, bins);
  const auto& proj = detail::embedding_projection(bins, out_dim);
  std::vector<double> emb(out_dim, 0.0);
  double enorm = 0;
  for (std::size_t r = 0; r < out_dim; ++r) {
    for (std::size_t k = 0; k < bins; ++k) emb[r] += proj[r][k] * envelope[k];
    enorm += emb[r] * emb[r];
  }
  enorm = std::sqrt(enorm);
  if (enorm > 1e-12)
    for (auto& v : emb) v /= enorm;
  return emb;
}

inline double timbre_similarity(const Tensor<float>& a, const Tensor<float>& b) {
  return cosine_similarity(timbre_embedding(a), timbre_embedding(b));
}

// ---------------------------------------------------------------------------
// onset detection and alignment scoring
// ---------------------------------------------------------------------------

struct OnsetDetectorConfig {
  double rel_threshold = 0.1;   // fraction of the clip's peak energy rise
  double energy_factor = 2.0;   // onset frames must exceed this multiple of the median energy
  int min_separation = 8;       // mel frames between detections
};

/// Local maxima of the positive frame-energy derivative above an adaptive
/// threshold. Near-flat clips produce no detections.
inline std::vector<std::size_t> detect_onsets(const Tensor<float>& mel, const OnsetDetectorConfig& cfg = {}) {
  const std::size_t frames = mel.dim(0);
  const std::vector<double> e = dsp::frame_energies(mel);
  const double med = dsp::median_of(e);
  std::vector<double> rise(frames, 0.0);
  for (std::size_t t = 1; t < frames; ++t) rise[t] = std::max(0.0, e[t] - e[t - 1]);
  const double peak = *std::max_element(rise.begin(), rise.end());
  if (peak <= 0) return {};
  const double threshold = cfg.rel_threshold * peak;

  std::vector<std::size_t> candidates;
  for (std::size_t t = 1; t < frames; ++t) {
    if (rise[t] < threshold) continue;
    if (e[t] < cfg.energy_factor * med) continue;
    bool is_max = true;
    for (int d = -2; d <= 2; ++d) {
      const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(t) + d;
      if (at >= 0 && at < static_cast<std::ptrdiff_t>(frames) && rise[static_cast<std::size_t>(at)] > rise[t])
        is_max = false;
    }
    if (is_max) candidates.push_back(t);
  }
  // keep the strongest within each separation window
  std::sort(candidates.begin(), candidates.end(),
            [&](std::size_t a, std::size_t b) { return rise[a] > rise[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : candidates) {
    bool clash = false;
    for (std::size_t k : kept)
      if (std::llabs(static_cast<long long>(c) - static_cast<long long>(k)) < cfg.min_separation) clash = true;
    if (!clash) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

struct OnsetScore {
  double hit_rate = 0;
  double mean_offset = 0;
  std::size_t detections = 0;
};

/// Greedy matching of detections to ground-truth mel-frame events within
/// `tol` frames. With no ground-truth events the score is vacuously 1 when
/// nothing is detected.
inline OnsetScore onset_alignment(const Tensor<float>& mel, const std::vector<int>& truth_mel_frames,
                                  int tol, const OnsetDetectorConfig& cfg = {}) {
  const std::vector<std::size_t> det = detect_onsets(mel, cfg);
  OnsetScore score;
  score.detections = det.size();
  if (truth_mel_frames.empty()) {
    score.hit_rate = det.empty() ? 1.0 : 0.0;
    return score;
  }
  std::vector<bool> used(det.size(), false);
  std::size_t hits = 0;
  double off = 0;
  for (int gt : truth_mel_frames) {
    std::ptrdiff_t best = -1;
    long long best_d = 0;
    for (std::size_t i = 0; i < det.size(); ++i) {
      if (used[i]) continue;
      const long long d = std::llabs(static_cast<long long>(det[i]) - gt);
      if (best < 0 || d < best_d) {
        best = static_cast<std::ptrdiff_t>(i);
        best_d = d;
      }
    }
    if (best >= 0 && best_d <= tol) {
      used[static_cast<std::size_t>(best)] = true;
      ++hits;
      off += static_cast<double>(best_d);
    }
  }
  score.hit_rate = static_cast<double>(hits) / static_cast<double>(truth_mel_frames.size());
  score.mean_offset = hits > 0 ? off / static_cast<double>(hits) : 0.0;
  return score;
}

}  // namespace vts::metrics
