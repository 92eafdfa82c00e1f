#pragma once

// Synthetic paired corpus with known ground truth: damped harmonic tones at
// known event times rendered to audio/mel, and video features that carry the
// event timing only (a fixed projection of the activation train), making
// "timing comes from video, timbre from audio" true by construction.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vts/common.hpp"
#include "vts/config.hpp"
#include "vts/dsp.hpp"
#include "vts/rng.hpp"
#include "vts/tensor.hpp"
#include "vts/tensor_file.hpp"
#include "vts/wav.hpp"

namespace vts::data {

struct TimbreParams {
  double f0 = 0;                       // Hz
  std::vector<double> harmonic_amps;   // nonnegative, unit sum
  double decay = 0;                    // 1/s
};

struct TimbreFamily {
  std::string name;
  TimbreParams base;
};

/// Two well-separated spectral families; per-sample parameters jitter
/// around these. Event statistics are identical across families so timing
/// carries no family information.
inline std::vector<TimbreFamily> default_families() {
  return {
      {"pluck", {196.0, {1.0, 0.55, 0.3, 0.18, 0.1}, 10.0}},
      {"chime", {740.0, {0.45, 1.0, 0.7, 0.35}, 22.0}},
  };
}

struct SyntheticSample {
  std::string id;
  std::string category;
  Tensor<float> video;           // (T_v, D_v)
  Tensor<float> mel;             // (T_m, n_mels)
  Waveform audio;
  std::vector<int> event_frames;  // video timebase, strictly increasing
  TimbreParams timbre;
  double noise_floor = 0;
};

struct SplitManifest {
  std::vector<std::string> train, val, test;
};

// ---------------------------------------------------------------------------
// synthesis
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> draw_event_frames(const RunConfig& cfg, Rng& rng) {
  const int tv = cfg.model.video_frames;
  const int gap = cfg.data.event_min_gap;
  const int lo = 2, hi = tv - 5;
  const int count = static_cast<int>(rng.uniform_int(cfg.data.events_min, cfg.data.events_max));
  std::vector<int> frames;
  int attempts = 0;
  while (static_cast<int>(frames.size()) < count && attempts < 500) {
    ++attempts;
    const int c = static_cast<int>(rng.uniform_int(lo, hi));
    bool ok = true;
    for (int f : frames)
      if (std::abs(f - c) < gap) ok = false;
    if (ok) frames.push_back(c);
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

inline TimbreParams jitter_timbre(const TimbreParams& base, Rng& rng) {
  TimbreParams t;
  t.f0 = base.f0 * rng.uniform(0.96, 1.04);
  t.decay = base.decay * rng.uniform(0.85, 1.15);
  double sum = 0;
  for (double a : base.harmonic_amps) {
    const double v = std::max(0.0, a * rng.uniform(0.9, 1.1));
    t.harmonic_amps.push_back(v);
    sum += v;
  }
  for (double& a : t.harmonic_amps) a /= sum;
  return t;
}

}  // namespace detail

/// The fixed feature embedding direction shared by every sample of a corpus.
inline Tensor<float> feature_projection(const RunConfig& cfg, std::uint64_t corpus_seed) {
  Rng rng(derive_seed(corpus_seed, 0xfeedbeef));
  Tensor<float> u({static_cast<std::size_t>(cfg.model.video_dim)});
  double norm = 0;
  for (std::size_t i = 0; i < u.numel(); ++i) {
    const double v = rng.normal();
    u[i] = static_cast<float>(v);
    norm += v * v;
  }
  norm = std::sqrt(std::max(norm, 1e-12));
  for (std::size_t i = 0; i < u.numel(); ++i) u[i] = static_cast<float>(u[i] / norm);
  return u;
}

/// Render a paired sample from pinned factors: tones at the event times
/// plus a noise floor, mel-extracted audio, and timing-only video features.
/// Per-event amplitude/phase and the noise come from `rng`.
inline SyntheticSample render_sample(const RunConfig& cfg, const TimbreParams& timbre,
                                     const std::vector<int>& event_frames, double noise_floor,
                                     const Tensor<float>& projection, Rng& rng) {
  const ModelConfig& m = cfg.model;
  SyntheticSample s;
  s.noise_floor = noise_floor;
  s.event_frames = event_frames;
  s.timbre = timbre;

  // audio: sum of damped harmonic tones starting at event_frame * 4 * hop
  const std::size_t n_samples = static_cast<std::size_t>(m.mel_frames) * static_cast<std::size_t>(m.hop_size);
  s.audio.sample_rate = m.sample_rate;
  s.audio.samples.assign(n_samples, 0.0);
  const double sr = m.sample_rate;
  for (int frame : s.event_frames) {
    const auto onset = static_cast<std::size_t>(frame) * static_cast<std::size_t>(m.upsample_factor()) *
                       static_cast<std::size_t>(m.hop_size);
    const double amp = rng.uniform(0.5, 0.9);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (std::size_t t = onset; t < n_samples; ++t) {
      const double tau = static_cast<double>(t - onset) / sr;
      const double env = amp * std::exp(-s.timbre.decay * tau);
      if (env < 1e-5) break;
      double v = 0;
      for (std::size_t h = 0; h < s.timbre.harmonic_amps.size(); ++h) {
        const double f = s.timbre.f0 * static_cast<double>(h + 1);
        if (f >= 0.47 * sr) break;
        v += s.timbre.harmonic_amps[h] * std::sin(2.0 * M_PI * f * tau + phase * static_cast<double>(h + 1));
      }
      s.audio.samples[t] += env * v;
    }
  }
  if (noise_floor > 0)
    for (auto& v : s.audio.samples) {
      v += noise_floor * rng.normal();
      v = std::clamp(v, -1.0, 1.0);
    }

  // video: triangular activation around each event, projected to D_v channels
  const auto tv = static_cast<std::size_t>(m.video_frames);
  const auto dv = static_cast<std::size_t>(m.video_dim);
  std::vector<double> act(tv, 0.0);
  for (int frame : s.event_frames)
    for (int d = -1; d <= 1; ++d) {
      const int at = frame + d;
      if (at >= 0 && at < static_cast<int>(tv))
        act[static_cast<std::size_t>(at)] = std::max(act[static_cast<std::size_t>(at)], d == 0 ? 1.0 : 0.5);
    }
  s.video = Tensor<float>({tv, dv});
  for (std::size_t t = 0; t < tv; ++t)
    for (std::size_t c = 0; c < dv; ++c)
      s.video(t, c) = static_cast<float>(act[t] * projection[c] + cfg.data.feature_noise * rng.normal());

  s.mel = dsp::extract_mel(s.audio, m);
  return s;
}

/// Draw event times and jittered timbre for one corpus sample, then render.
inline SyntheticSample synthesize_sample(const RunConfig& cfg, const TimbreFamily& family,
                                         const std::string& id, std::uint64_t seed,
                                         const Tensor<float>& projection) {
  Rng rng(seed);
  const std::vector<int> events = detail::draw_event_frames(cfg, rng);
  const TimbreParams timbre = detail::jitter_timbre(family.base, rng);
  SyntheticSample s = render_sample(cfg, timbre, events, cfg.data.noise_floor, projection, rng);
  s.id = id;
  s.category = family.name;
  return s;
}

/// Alternate families over n ids; per-sample streams are derived from the
/// corpus seed so regeneration is bit-identical.
inline std::vector<SyntheticSample> make_corpus(const RunConfig& cfg, int n, std::uint64_t seed) {
  const auto families = default_families();
  const Tensor<float> projection = feature_projection(cfg, seed);
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "s%05d", i);
    const auto& fam = families[static_cast<std::size_t>(i) % families.size()];
    out.push_back(synthesize_sample(cfg, fam, id, derive_seed(seed, 1, static_cast<std::uint64_t>(i)), projection));
  }
  return out;
}

// ---------------------------------------------------------------------------
// splits
// ---------------------------------------------------------------------------

inline SplitManifest make_splits(std::vector<std::string> ids, std::uint64_t seed, int val_count,
                                 int test_count) {
  if (static_cast<int>(ids.size()) < val_count + test_count + 1)
    throw DataError("make_splits: need more than " + std::to_string(val_count + test_count) + " ids, got " +
                    std::to_string(ids.size()));
  Rng rng(seed);
  rng.shuffle(ids);
  SplitManifest sm;
  sm.val.assign(ids.begin(), ids.begin() + val_count);
  sm.test.assign(ids.begin() + val_count, ids.begin() + val_count + test_count);
  sm.train.assign(ids.begin() + val_count + test_count, ids.end());
  return sm;
}

// ---------------------------------------------------------------------------
// on-disk corpus
// ---------------------------------------------------------------------------

inline void write_corpus(const std::string& dir, const std::vector<SyntheticSample>& samples,
                         const RunConfig& cfg, std::uint64_t seed, const SplitManifest* splits) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["config_hash"] = config_hash(cfg);
  manifest["preset"] = cfg.preset;
  auto& list = manifest["samples"] = nlohmann::json::array();
  for (const auto& s : samples) {
    const fs::path sdir = fs::path(dir) / "samples" / s.id;
    fs::create_directories(sdir);
    write_tensor((sdir / "video.vstf").string(), s.video);
    write_tensor((sdir / "mel.vstf").string(), s.mel);
    write_wav((sdir / "audio.wav").string(), s.audio);
    nlohmann::json j;
    j["id"] = s.id;
    j["category"] = s.category;
    j["video"] = ("samples/" + s.id + "/video.vstf");
    j["mel"] = ("samples/" + s.id + "/mel.vstf");
    j["audio"] = ("samples/" + s.id + "/audio.wav");
    j["event_frames"] = s.event_frames;
    j["timbre"] = {{"f0", s.timbre.f0}, {"harmonic_amps", s.timbre.harmonic_amps}, {"decay", s.timbre.decay}};
    j["noise_floor"] = s.noise_floor;
    list.push_back(j);
  }
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
  if (splits) {
    nlohmann::json sj;
    sj["train"] = splits->train;
    sj["val"] = splits->val;
    sj["test"] = splits->test;
    std::ofstream sf(fs::path(dir) / "splits.json");
    sf << sj.dump(2) << "\n";
  }
}

struct LoadedCorpus {
  std::vector<SyntheticSample> samples;
  SplitManifest splits;
  std::map<std::string, std::size_t> by_id;

  const SyntheticSample& at(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("corpus: unknown sample id " + id);
    return samples[it->second];
  }

  const std::vector<std::string>& split(const std::string& name) const {
    if (name == "train") return splits.train;
    if (name == "val") return splits.val;
    if (name == "test") return splits.test;
    throw DataError("unknown split: " + name);
  }
};

/// Loads tensors for every manifest entry and enforces the 4x timebase
/// invariant; audio is left on disk (the pipeline consumes mels).
inline LoadedCorpus load_corpus(const std::string& dir, int upsample_factor = 4) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw DataError("cannot open corpus manifest: " + dir + "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, true);
  LoadedCorpus c;
  for (const auto& j : manifest.at("samples")) {
    SyntheticSample s;
    s.id = j.at("id").get<std::string>();
    s.category = j.at("category").get<std::string>();
    s.video = read_tensor<float>((fs::path(dir) / j.at("video").get<std::string>()).string());
    s.mel = read_tensor<float>((fs::path(dir) / j.at("mel").get<std::string>()).string());
    if (j.contains("event_frames")) s.event_frames = j.at("event_frames").get<std::vector<int>>();
    if (j.contains("timbre")) {
      s.timbre.f0 = j.at("timbre").at("f0").get<double>();
      s.timbre.harmonic_amps = j.at("timbre").at("harmonic_amps").get<std::vector<double>>();
      s.timbre.decay = j.at("timbre").at("decay").get<double>();
    }
    if (j.contains("noise_floor")) s.noise_floor = j.at("noise_floor").get<double>();
    if (s.mel.rank() != 2 || s.video.rank() != 2 ||
        s.mel.dim(0) != static_cast<std::size_t>(upsample_factor) * s.video.dim(0))
      throw DataError("corpus sample " + s.id + " violates the " + std::to_string(upsample_factor) +
                      "x mel/video timebase invariant");
    c.by_id[s.id] = c.samples.size();
    c.samples.push_back(std::move(s));
  }
  std::ifstream sf(fs::path(dir) / "splits.json");
  if (sf) {
    nlohmann::json sj = nlohmann::json::parse(sf, nullptr, true);
    c.splits.train = sj.at("train").get<std::vector<std::string>>();
    c.splits.val = sj.at("val").get<std::vector<std::string>>();
    c.splits.test = sj.at("test").get<std::vector<std::string>>();
  }
  return c;
}

}  // namespace vts::data
