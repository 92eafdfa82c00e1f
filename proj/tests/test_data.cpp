#include <vts/data.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

using namespace vts;
using Catch::Approx;

namespace {

RunConfig small_cfg() {
  RunConfig cfg = desk_preset();
  cfg.model.video_frames = 24;
  cfg.model.mel_frames = 96;
  cfg.model.video_dim = 16;
  return cfg;
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "vts_data_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("corpus regeneration is bit-identical for the same seed", "[data]") {
  const RunConfig cfg = small_cfg();
  const auto a = data::make_corpus(cfg, 4, 99);
  const auto b = data::make_corpus(cfg, 4, 99);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(a[i].id == b[i].id);
    REQUIRE(a[i].category == b[i].category);
    REQUIRE(a[i].event_frames == b[i].event_frames);
    REQUIRE(a[i].audio.samples == b[i].audio.samples);
    for (std::size_t j = 0; j < a[i].mel.numel(); ++j) REQUIRE(a[i].mel[j] == b[i].mel[j]);
    for (std::size_t j = 0; j < a[i].video.numel(); ++j) REQUIRE(a[i].video[j] == b[i].video[j]);
  }

  SECTION("different seeds differ") {
    const auto c = data::make_corpus(cfg, 4, 100);
    bool any_diff = false;
    for (std::size_t j = 0; j < a[0].mel.numel(); ++j) any_diff |= a[0].mel[j] != c[0].mel[j];
    REQUIRE(any_diff);
  }
}

TEST_CASE("samples satisfy declared invariants", "[data]") {
  const RunConfig cfg = small_cfg();
  const auto corpus = data::make_corpus(cfg, 6, 7);
  for (const auto& s : corpus) {
    REQUIRE(s.mel.dim(0) == 4 * s.video.dim(0));
    REQUIRE(s.mel.dim(1) == 80);
    for (std::size_t i = 1; i < s.event_frames.size(); ++i)
      REQUIRE(s.event_frames[i] > s.event_frames[i - 1]);
    if (!s.event_frames.empty()) {
      REQUIRE(s.event_frames.front() >= 0);
      REQUIRE(s.event_frames.back() < cfg.model.video_frames);
    }
    REQUIRE(s.timbre.f0 >= 80.0);
    REQUIRE(s.timbre.f0 <= 2000.0);
    double amp_sum = 0;
    for (double a : s.timbre.harmonic_amps) {
      REQUIRE(a >= 0.0);
      amp_sum += a;
    }
    REQUIRE(amp_sum == Approx(1.0));
    REQUIRE(s.video.all_finite());
    REQUIRE(s.mel.all_finite());
  }
  // both families present, alternating
  REQUIRE(corpus[0].category != corpus[1].category);
}

TEST_CASE("single pinned event lands on the 4x timebase", "[data]") {
  RunConfig cfg = small_cfg();
  const auto proj = data::feature_projection(cfg, 1);
  Rng rng(5);
  const auto s = data::render_sample(cfg, data::default_families()[0].base, {10}, 0.0, proj, rng);

  // energy argmax of the mel should sit at the tone onset, frames [40, 44]
  std::size_t argmax = 0;
  const auto e = dsp::frame_energies(s.mel);
  for (std::size_t t = 1; t < e.size(); ++t)
    if (e[t] > e[argmax]) argmax = t;
  REQUIRE(argmax >= 40);
  REQUIRE(argmax <= 44);

  SECTION("zero events give a floor-level mel") {
    Rng r2(6);
    const auto quiet = data::render_sample(cfg, data::default_families()[0].base, {}, 0.0, proj, r2);
    const auto floor_v = static_cast<float>(std::log(cfg.model.mel_floor));
    for (std::size_t i = 0; i < quiet.mel.numel(); ++i) REQUIRE(quiet.mel[i] == floor_v);
  }
}

TEST_CASE("split arithmetic and determinism", "[data]") {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("s" + std::to_string(i));

  SECTION("100 ids at the full-scale split sizes give 36/32/32") {
    const auto sm = data::make_splits(ids, 3, 32, 32);
    REQUIRE(sm.train.size() == 36);
    REQUIRE(sm.val.size() == 32);
    REQUIRE(sm.test.size() == 32);
  }
  SECTION("10 ids at a 2/2 desk split give 6/2/2") {
    std::vector<std::string> ten(ids.begin(), ids.begin() + 10);
    const auto sm = data::make_splits(ten, 3, 2, 2);
    REQUIRE(sm.train.size() == 6);
    REQUIRE(sm.val.size() == 2);
    REQUIRE(sm.test.size() == 2);
  }
  SECTION("same seed twice is identical; splits are disjoint") {
    const auto a = data::make_splits(ids, 11, 32, 32);
    const auto b = data::make_splits(ids, 11, 32, 32);
    REQUIRE(a.train == b.train);
    REQUIRE(a.val == b.val);
    REQUIRE(a.test == b.test);
    std::set<std::string> seen;
    for (const auto* part : {&a.train, &a.val, &a.test})
      for (const auto& id : *part) REQUIRE(seen.insert(id).second);
    REQUIRE(seen.size() == 100);
  }
  SECTION("too few ids is an error") {
    std::vector<std::string> three(ids.begin(), ids.begin() + 3);
    REQUIRE_THROWS_AS(data::make_splits(three, 1, 2, 2), DataError);
  }
}

TEST_CASE("corpus writes and reloads losslessly", "[data]") {
  const RunConfig cfg = small_cfg();
  const auto dir = temp_dir("roundtrip");
  const auto corpus = data::make_corpus(cfg, 5, 21);
  std::vector<std::string> ids;
  for (const auto& s : corpus) ids.push_back(s.id);
  const auto splits = data::make_splits(ids, 21, 1, 1);
  data::write_corpus(dir.string(), corpus, cfg, 21, &splits);

  const auto loaded = data::load_corpus(dir.string());
  REQUIRE(loaded.samples.size() == 5);
  REQUIRE(loaded.splits.train.size() == 3);
  REQUIRE(loaded.split("val").size() == 1);
  for (const auto& s : corpus) {
    const auto& l = loaded.at(s.id);
    REQUIRE(l.category == s.category);
    REQUIRE(l.event_frames == s.event_frames);
    REQUIRE(l.timbre.f0 == Approx(s.timbre.f0));
    for (std::size_t j = 0; j < s.mel.numel(); ++j) REQUIRE(l.mel[j] == s.mel[j]);
    for (std::size_t j = 0; j < s.video.numel(); ++j) REQUIRE(l.video[j] == s.video[j]);
  }

  SECTION("a broken timebase ratio fails loudly at load") {
    write_tensor((dir / "samples" / corpus[0].id / "video.vstf").string(), Tensor<float>({23, 16}, 0.0f));
    REQUIRE_THROWS_AS(data::load_corpus(dir.string()), DataError);
  }
}
