#include <vts/dsp.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

using namespace vts;
using Catch::Approx;

namespace {

Waveform sine(double hz, double seconds, int rate = 22050, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / rate);
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// extract_mel
// ---------------------------------------------------------------------------

TEST_CASE("silence maps to the floor clamp everywhere", "[dsp][mel]") {
  const ModelConfig cfg = paper_preset().model;
  Waveform w;
  w.samples.assign(220500, 0.0);
  const auto mel = dsp::extract_mel(w, cfg);
  REQUIRE(mel.dim(0) == 860);
  REQUIRE(mel.dim(1) == 80);
  const auto floor_v = static_cast<float>(std::log(1e-5));
  for (std::size_t i = 0; i < mel.numel(); ++i) REQUIRE(mel[i] == floor_v);
}

TEST_CASE("440 Hz tone concentrates on one mel bin across interior frames", "[dsp][mel]") {
  const ModelConfig cfg = paper_preset().model;
  const auto mel = dsp::extract_mel(sine(440.0, 10.0), cfg);

  // oracle: the filter whose center frequency is nearest the tone
  const auto centers = dsp::mel_center_frequencies(cfg.n_mels, cfg.sample_rate);
  std::size_t expected = 0;
  for (std::size_t m = 1; m < centers.size(); ++m)
    if (std::abs(centers[m] - 440.0) < std::abs(centers[expected] - 440.0)) expected = m;

  std::set<std::size_t> argmaxes;
  for (std::size_t t = 4; t + 4 < mel.dim(0); ++t) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < mel.dim(1); ++m)
      if (mel(t, m) > mel(t, best)) best = m;
    argmaxes.insert(best);
  }
  REQUIRE(argmaxes.size() == 1);
  const auto got = static_cast<std::ptrdiff_t>(*argmaxes.begin());
  REQUIRE(std::abs(got - static_cast<std::ptrdiff_t>(expected)) <= 1);
}

TEST_CASE("paper-scale pairing keeps the 4x timebase", "[dsp][mel]") {
  const ModelConfig cfg = paper_preset().model;
  REQUIRE(cfg.video_frames == 215);
  REQUIRE(cfg.mel_frames == 4 * cfg.video_frames);
  const auto mel = dsp::extract_mel(sine(200.0, 10.0), cfg);
  REQUIRE(mel.dim(0) == static_cast<std::size_t>(4 * cfg.video_frames));
}

TEST_CASE("trailing silence past the frame horizon leaves the mel unchanged", "[dsp][mel]") {
  const ModelConfig cfg = desk_preset().model;
  Waveform w = sine(330.0, 216.0 * 256.0 / 22050.0);
  const auto a = dsp::extract_mel(w, cfg);
  w.samples.insert(w.samples.end(), 22050, 0.0);
  const auto b = dsp::extract_mel(w, cfg);
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("rejected and invalid audio", "[dsp][mel]") {
  const ModelConfig cfg = desk_preset().model;
  Waveform wrong_rate = sine(440.0, 1.0, 16000);
  REQUIRE_THROWS_AS(dsp::extract_mel(wrong_rate, cfg), DataError);

  Waveform bad = sine(440.0, 1.0);
  bad.samples[100] = std::nan("");
  REQUIRE_THROWS_AS(dsp::extract_mel(bad, cfg), DataError);

  Waveform empty;
  REQUIRE_THROWS_AS(dsp::extract_mel(empty, cfg), DataError);
}

// ---------------------------------------------------------------------------
// energy_mask
// ---------------------------------------------------------------------------

namespace {

/// Independent oracle: sort frame energies, median, mask strictly-above.
Tensor<float> mask_oracle(const Tensor<float>& mel, double floor_lin) {
  std::vector<double> e(mel.dim(0), 0.0);
  for (std::size_t t = 0; t < mel.dim(0); ++t)
    for (std::size_t b = 0; b < mel.dim(1); ++b) e[t] += std::exp(static_cast<double>(mel(t, b)));
  std::vector<double> sorted = e;
  std::sort(sorted.begin(), sorted.end());
  const double med = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                       : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  Tensor<float> out = mel;
  for (std::size_t t = 0; t < mel.dim(0); ++t)
    if (e[t] > med)
      for (std::size_t b = 0; b < mel.dim(1); ++b) out(t, b) = static_cast<float>(std::log(floor_lin));
  return out;
}

}  // namespace

TEST_CASE("identical frames are never masked", "[dsp][mask]") {
  Tensor<float> mel({6, 80}, -2.5f);
  const auto out = dsp::energy_mask(mel);
  for (std::size_t i = 0; i < mel.numel(); ++i) REQUIRE(out[i] == mel[i]);
}

TEST_CASE("median masking on the 4-frame example", "[dsp][mask]") {
  // single-bin frames with linear energies 1, 5, 2, 8 -> median 3.5
  Tensor<float> mel({4, 1});
  const double e[4] = {1.0, 5.0, 2.0, 8.0};
  for (std::size_t t = 0; t < 4; ++t) mel(t, 0) = static_cast<float>(std::log(e[t]));
  const auto out = dsp::energy_mask(mel);
  const auto floor_v = static_cast<float>(std::log(1e-5));
  REQUIRE(out(0, 0) == mel(0, 0));
  REQUIRE(out(1, 0) == floor_v);
  REQUIRE(out(2, 0) == mel(2, 0));
  REQUIRE(out(3, 0) == floor_v);
}

TEST_CASE("energy mask agrees bit-for-bit with the sort-median oracle", "[dsp][mask]") {
  Rng rng(42);
  for (int round = 0; round < 8; ++round) {
    Tensor<float> mel({32, 80});
    for (std::size_t i = 0; i < mel.numel(); ++i)
      mel[i] = static_cast<float>(rng.uniform(std::log(1e-5), 2.0));
    const auto got = dsp::energy_mask(mel);
    const auto want = mask_oracle(mel, 1e-5);
    for (std::size_t i = 0; i < mel.numel(); ++i) REQUIRE(got[i] == want[i]);
  }
}

TEST_CASE("energy mask properties", "[dsp][mask]") {
  SECTION("never increases any bin") {
    Rng rng(7);
    Tensor<float> mel({24, 16});
    for (std::size_t i = 0; i < mel.numel(); ++i) mel[i] = static_cast<float>(rng.uniform(-11.5, 3.0));
    const auto out = dsp::energy_mask(mel);
    for (std::size_t i = 0; i < mel.numel(); ++i) REQUIRE(out[i] <= mel[i]);
  }
  SECTION("idempotent at the floor clamp") {
    Tensor<float> mel({12, 8}, static_cast<float>(std::log(1e-5)));
    const auto once = dsp::energy_mask(mel);
    const auto twice = dsp::energy_mask(once);
    for (std::size_t i = 0; i < mel.numel(); ++i) {
      REQUIRE(once[i] == mel[i]);
      REQUIRE(twice[i] == once[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// random_resample
// ---------------------------------------------------------------------------

TEST_CASE("identity configuration reproduces the input", "[dsp][resample]") {
  dsp::ResampleSpec spec;
  spec.seed = 5;
  spec.k_min = spec.k_max = 1;
  spec.stretch_lo = spec.stretch_hi = 1.0;
  Rng rng(99);
  Tensor<float> x({10, 3});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
  const auto y = dsp::random_resample(x, spec);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) REQUIRE(y[i] == Approx(x[i]).margin(1e-7));
}

TEST_CASE("hand-traced two-segment swap", "[dsp][resample]") {
  // [A,B,C,D] split after frame 2, factors 1.0, segments swapped -> [C,D,A,B]
  Tensor<float> x({4, 2});
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 2; ++c) x(t, c) = static_cast<float>(10 * t + c);
  dsp::ResamplePlan plan;
  plan.in_len = 4;
  plan.segments = {{0, 2}, {2, 4}};
  plan.factors = {1.0, 1.0};
  plan.perm = {1, 0};
  const auto y = dsp::apply_resample_map(x, dsp::plan_to_map(plan));
  const float want[4] = {20, 30, 0, 10};
  for (std::size_t t = 0; t < 4; ++t) {
    REQUIRE(y(t, 0) == want[t]);
    REQUIRE(y(t, 1) == want[t] + 1);
  }
}

TEST_CASE("order destruction over seeds with K >= 4", "[dsp][resample]") {
  dsp::ResampleSpec spec;
  spec.k_min = 4;
  spec.k_max = 8;
  Tensor<float> ramp({32, 1});
  for (std::size_t t = 0; t < 32; ++t) ramp(t, 0) = static_cast<float>(t);

  int ordered = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    spec.seed = seed;
    const auto y = dsp::random_resample(ramp, spec);
    REQUIRE(y.dim(0) == 32);
    REQUIRE(y.dim(1) == 1);
    bool nondecreasing = true;
    for (std::size_t t = 1; t < 32; ++t)
      if (y(t, 0) < y(t - 1, 0)) nondecreasing = false;
    if (nondecreasing) ++ordered;
  }
  // identity permutation probability is at most 1/4! ; allow sampling slack
  REQUIRE(ordered <= 13);
}

TEST_CASE("stretch factor 1 keeps frames from the input multiset", "[dsp][resample]") {
  dsp::ResampleSpec spec;
  spec.seed = 31;
  spec.k_min = 2;
  spec.k_max = 5;
  spec.stretch_lo = spec.stretch_hi = 1.0;
  Tensor<float> x({16, 2});
  for (std::size_t t = 0; t < 16; ++t) {
    x(t, 0) = static_cast<float>(t);
    x(t, 1) = static_cast<float>(100 + t);
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    const auto y = dsp::random_resample(x, spec);
    for (std::size_t t = 0; t < 16; ++t) {
      const auto v = y(t, 0);
      REQUIRE(v == std::floor(v));
      REQUIRE(v >= 0);
      REQUIRE(v < 16);
      REQUIRE(y(t, 1) == v + 100);  // rows move as whole frames
    }
  }
}

TEST_CASE("resample rejects inputs shorter than k_min and is seed-deterministic", "[dsp][resample]") {
  dsp::ResampleSpec spec;
  spec.seed = 3;
  Tensor<float> tiny({1, 4}, 1.0f);
  REQUIRE_THROWS_AS(dsp::random_resample(tiny, spec), DataError);

  Tensor<float> x({24, 3});
  Rng rng(1);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
  const auto a = dsp::random_resample(x, spec);
  const auto b = dsp::random_resample(x, spec);
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}

// ---------------------------------------------------------------------------
// time_shift
// ---------------------------------------------------------------------------

TEST_CASE("circular shift identities", "[dsp][shift]") {
  Rng rng(11);
  Tensor<float> m({12, 5});
  for (std::size_t i = 0; i < m.numel(); ++i) m[i] = static_cast<float>(rng.uniform(-1, 1));

  SECTION("shift by T is the identity") {
    const auto y = dsp::time_shift_by(m, 12);
    for (std::size_t i = 0; i < m.numel(); ++i) REQUIRE(y[i] == m[i]);
  }
  SECTION("shift by d then T-d is the identity") {
    const auto y = dsp::time_shift_by(dsp::time_shift_by(m, 5), 7);
    for (std::size_t i = 0; i < m.numel(); ++i) REQUIRE(y[i] == m[i]);
  }
}

TEST_CASE("impulse moves by the shift amount", "[dsp][shift]") {
  Tensor<float> m({8, 1}, 0.0f);
  m(2, 0) = 1.0f;
  const auto y = dsp::time_shift_by(m, 3);
  for (std::size_t t = 0; t < 8; ++t) REQUIRE(y(t, 0) == (t == 5 ? 1.0f : 0.0f));
}

TEST_CASE("seeded shift picks d in the documented band and preserves frames", "[dsp][shift]") {
  const std::size_t frames = 20;
  Tensor<float> m({frames, 1}, 0.0f);
  m(0, 0) = 1.0f;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto y = dsp::time_shift(m, seed);
    std::size_t at = frames;
    for (std::size_t t = 0; t < frames; ++t)
      if (y(t, 0) == 1.0f) at = t;
    REQUIRE(at >= 2);   // ceil(0.1 * 20)
    REQUIRE(at <= 18);  // T - ceil(0.1 * 20)
  }

  SECTION("multiset of frame vectors and per-bin mean are exact") {
    Rng rng(5);
    Tensor<float> r({16, 4});
    for (std::size_t i = 0; i < r.numel(); ++i) r[i] = static_cast<float>(rng.uniform(-2, 2));
    const auto y = dsp::time_shift(r, 9);
    std::multiset<std::vector<float>> in_rows, out_rows;
    for (std::size_t t = 0; t < 16; ++t) {
      std::vector<float> a(4), b(4);
      for (std::size_t c = 0; c < 4; ++c) {
        a[c] = r(t, c);
        b[c] = y(t, c);
      }
      in_rows.insert(a);
      out_rows.insert(b);
    }
    REQUIRE(in_rows == out_rows);
  }

  Tensor<float> tiny({6, 2}, 0.0f);
  REQUIRE_THROWS_AS(dsp::time_shift(tiny, 1), DataError);
}
