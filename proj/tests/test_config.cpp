#include <vts/config.hpp>

#include <catch2/catch_amalgamated.hpp>

using namespace vts;

TEST_CASE("presets validate and differ in hash", "[config]") {
  RunConfig desk = desk_preset();
  RunConfig paper = paper_preset();
  REQUIRE_NOTHROW(validate_config(desk));
  REQUIRE_NOTHROW(validate_config(paper));
  REQUIRE(config_hash(desk) != config_hash(paper));
  REQUIRE(config_hash(desk) == config_hash(desk_preset()));

  SECTION("desk keeps the 4x timebase and the 80-bin mel axis") {
    REQUIRE(desk.model.mel_frames == 4 * desk.model.video_frames);
    REQUIRE(desk.model.n_mels == 80);
  }
  SECTION("paper-scale tensor dims") {
    REQUIRE(paper.model.video_dim == 2048);
    REQUIRE(paper.model.video_frames == 215);
    REQUIRE(paper.model.mel_frames == 860);
  }
}

TEST_CASE("config text parsing with sections, comments and preset", "[config]") {
  const std::string text =
      "# run at small scale\n"
      "preset = \"desk\"\n"
      "[train]\n"
      "lr = 0.001\n"
      "seed = 77\n"
      "[model]\n"
      "gu_width = 24\n";
  RunConfig cfg = parse_config_text(text);
  REQUIRE(cfg.preset == "desk");
  REQUIRE(cfg.train.lr == Catch::Approx(0.001));
  REQUIRE(cfg.train.seed == 77);
  REQUIRE(cfg.model.gu_width == 24);
  // untouched desk defaults survive
  REQUIRE(cfg.model.video_dim == 64);
}

TEST_CASE("unknown keys and bad values are config errors", "[config]") {
  REQUIRE_THROWS_AS(parse_config_text("nonsense_key = 3\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config_text("[train]\nlr = fast\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config_text("[model]\nmel_frames = 100\n"), ConfigError);  // breaks 4x ratio
}

TEST_CASE("canonical text is stable and order-independent", "[config]") {
  RunConfig a = parse_config_text("preset = \"desk\"\n[train]\nlr = 0.002\nbatch_size = 8\n");
  RunConfig b = parse_config_text("preset = \"desk\"\n[train]\nbatch_size = 8\nlr = 0.002\n");
  REQUIRE(config_canonical_text(a) == config_canonical_text(b));
}
