#include <vts/tensor_file.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace vts;

namespace {
std::filesystem::path temp_path(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "vts_tensor_io_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}
}  // namespace

TEST_CASE("tensor file round-trips float32 losslessly", "[tensor_io]") {
  Tensor<float> t({2, 3}, 0.0f);
  const auto path = temp_path("zeros.vstf").string();
  write_tensor(path, t);
  const auto back = read_tensor<float>(path);
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) REQUIRE(back[i] == t[i]);

  SECTION("non-trivial payload, exact bits") {
    Tensor<float> r({5, 4, 3});
    for (std::size_t i = 0; i < r.numel(); ++i) r[i] = std::sin(0.37f * static_cast<float>(i)) * 1e-3f;
    write_tensor(path, r);
    const auto rb = read_tensor<float>(path);
    for (std::size_t i = 0; i < r.numel(); ++i) REQUIRE(rb[i] == r[i]);
  }
}

TEST_CASE("corrupted magic is rejected naming the expected magic", "[tensor_io]") {
  Tensor<float> t({2, 2}, 1.0f);
  const auto path = temp_path("bad_magic.vstf").string();
  write_tensor(path, t);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XSTF", 4);
  }
  REQUIRE_THROWS_MATCHES(read_tensor<float>(path), FormatError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("VSTF")));
}

TEST_CASE("header field violations report the byte offset", "[tensor_io]") {
  const std::string good = tensor_to_bytes(Tensor<float>({3, 2}, 0.5f));

  SECTION("bad version at offset 4") {
    std::string bad = good;
    bad[4] = 9;
    try {
      tensor_from_bytes<float>(bad.data(), bad.size());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      REQUIRE(e.byte_offset == 4);
    }
  }
  SECTION("bad dtype at offset 5") {
    std::string bad = good;
    bad[5] = 2;
    try {
      tensor_from_bytes<float>(bad.data(), bad.size());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      REQUIRE(e.byte_offset == 5);
    }
  }
  SECTION("payload size mismatch") {
    std::string bad = good.substr(0, good.size() - 4);
    REQUIRE_THROWS_AS(tensor_from_bytes<float>(bad.data(), bad.size()), FormatError);
  }
}

TEST_CASE("file size is 16-byte header + dims + payload", "[tensor_io]") {
  Tensor<float> feats({215, 2048});
  const auto path = temp_path("feats.vstf").string();
  write_tensor(path, feats);
  const auto size = std::filesystem::file_size(path);
  REQUIRE(size == 16 + 8 + 215 * 2048 * 4);
}
