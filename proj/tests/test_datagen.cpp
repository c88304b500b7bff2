#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "semdisc/binary_io.hpp"
#include "semdisc/dataset_io.hpp"
#include "semdisc/datagen.hpp"
#include "semdisc/error.hpp"
#include "semdisc/png.hpp"
#include "semdisc/rng.hpp"

using namespace semdisc;
namespace fs = std::filesystem;

namespace {

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

fs::path temp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "semdisc_tests";
  fs::create_directories(dir);
  return dir / name;
}

SemanticMap scene_map(std::size_t k, std::size_t h, std::size_t w) {
  return {SemanticMode::kScene, k, h, w, std::vector<float>(k * h * w, 0.0f)};
}

}  // namespace

TEST_CASE("gen_scene is deterministic") {
  const Example a = gen_scene(7, 32, 32, 4);
  const Example b = gen_scene(7, 32, 32, 4);
  CHECK(same_bits(a.image, b.image));
  CHECK(same_bits(a.semantics.data, b.semantics.data));
  const Example c = gen_scene(8, 32, 32, 4);
  CHECK_FALSE(same_bits(a.image, c.image));
}

TEST_CASE("scene semantics are one-hot and images in range") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Example ex = gen_scene(seed, 24, 40, 6);
    const SemanticMap& s = ex.semantics;
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) {
        float total = 0.0f;
        for (std::size_t k = 0; k < s.channels; ++k) {
          const float v = s.at(k, y, x);
          CHECK((v == 0.0f || v == 1.0f));
          total += v;
        }
        REQUIRE(total == 1.0f);
      }
    for (float v : ex.image) REQUIRE((v >= -1.0f && v <= 1.0f));
  }
}

TEST_CASE("every class covers at least one percent of pixels over 1000 seeds") {
  std::vector<double> counts(4, 0.0);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Example ex = gen_scene(mix_seed(12345, seed), 32, 32, 4);
    for (int label : class_labels(ex.semantics)) counts[static_cast<std::size_t>(label)] += 1.0;
    total += 32.0 * 32.0;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    INFO("class " << k << " fraction " << counts[k] / total);
    CHECK(counts[k] / total >= 0.01);
  }
}

TEST_CASE("gen_scene argument validation") {
  CHECK_THROWS_AS(gen_scene(1, 32, 32, 13), ValidationError);
  CHECK_THROWS_AS(gen_scene(1, 32, 32, 1), ValidationError);
  CHECK_THROWS_AS(gen_scene(1, 8, 32, 4), ValidationError);
  CHECK_NOTHROW(gen_scene(1, 16, 16, 12));
}

TEST_CASE("gen_keypoint is deterministic with single peaks") {
  const Example a = gen_keypoint(3, 64, 64, 8);
  const Example b = gen_keypoint(3, 64, 64, 8);
  CHECK(same_bits(a.image, b.image));
  CHECK(same_bits(a.semantics.data, b.semantics.data));
  const SemanticMap& s = a.semantics;
  for (std::size_t k = 0; k < s.channels; ++k) {
    int peaks = 0, nonzero = 0;
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) {
        peaks += s.at(k, y, x) == 1.0f;
        nonzero += s.at(k, y, x) != 0.0f;
      }
    CHECK(peaks == nonzero);
    CHECK(peaks <= 1);
  }
  CHECK_THROWS_AS(gen_keypoint(3, 64, 64, 1), ValidationError);
}

TEST_CASE("keypoints stay in bounds for 1000 seeds") {
  std::size_t present = 0, absent = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Example ex = gen_keypoint(seed, 32, 48, 8);
    const auto keys = keypoint_locations(ex.semantics);
    for (const auto& k : keys) {
      if (!k) {
        ++absent;
        continue;
      }
      ++present;
      REQUIRE(k->first < 32);
      REQUIRE(k->second < 48);
    }
    REQUIRE(keys[0].has_value());
  }
  CHECK(absent > 0);
  CHECK(present > absent);
}

TEST_CASE("masks_from_scene") {
  SUBCASE("all-ones channel stays all ones") {
    SemanticMap s = scene_map(2, 8, 8);
    std::fill(s.data.begin(), s.data.begin() + 64, 1.0f);
    for (std::size_t r : {1u, 2u, 4u, 8u}) {
      const MaskSet m = masks_from_scene(s, r, r);
      for (std::size_t y = 0; y < r; ++y)
        for (std::size_t x = 0; x < r; ++x) {
          CHECK(m.at(0, y, x) == 1.0);
          CHECK(m.at(1, y, x) == 1.0);
          CHECK(m.at(2, y, x) == 0.0);
        }
    }
  }
  SUBCASE("single pixel lands in its covering cell") {
    for (std::size_t py = 0; py < 4; ++py)
      for (std::size_t px = 0; px < 4; ++px) {
        SemanticMap s = scene_map(1, 4, 4);
        s.at(0, py, px) = 1.0f;
        const MaskSet m = masks_from_scene(s, 2, 2);
        int ones = 0;
        for (std::size_t y = 0; y < 2; ++y)
          for (std::size_t x = 0; x < 2; ++x) {
            const bool covers = py / 2 == y && px / 2 == x;
            CHECK(m.at(1, y, x) == (covers ? 1.0 : 0.0));
            ones += m.at(1, y, x) == 1.0;
          }
        CHECK(ones == 1);
      }
  }
  SUBCASE("same resolution is the identity") {
    const Example ex = gen_scene(11, 16, 16, 5);
    const MaskSet m = masks_from_scene(ex.semantics, 16, 16);
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) CHECK(m.at(k + 1, y, x) == ex.semantics.at(k, y, x));
  }
  SUBCASE("non-divisible factors take the max over overlapping cells") {
    SemanticMap s = scene_map(1, 5, 5);
    s.at(0, 2, 2) = 1.0f;  // centre pixel is covered by every output cell
    const MaskSet m = masks_from_scene(s, 2, 2);
    for (double v : std::vector<double>(m.data.begin() + 4, m.data.end())) CHECK(v == 1.0);
  }
  SUBCASE("rejects keypoint maps") {
    const Example ex = gen_keypoint(1, 16, 16, 3);
    CHECK_THROWS_AS(masks_from_scene(ex.semantics, 4, 4), ValidationError);
  }
}

TEST_CASE("masks_from_keypoints") {
  SemanticMap s{SemanticMode::kKeypoint, 2, 24, 24, std::vector<float>(2 * 24 * 24, 0.0f)};
  s.at(0, 10, 7) = 1.0f;  // channel 1 is absent

  SUBCASE("peak and one-sigma values at full resolution") {
    const MaskSet m = masks_from_keypoints(s, 24, 24, 6.0);
    CHECK(m.at(1, 10, 7) == 1.0);
    CHECK(m.at(1, 16, 7) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(m.at(1, 10, 13) == doctest::Approx(0.6065306597).epsilon(1e-9));
    for (std::size_t i = 0; i < 24 * 24; ++i) {
      CHECK(m.data[i] == 1.0);
      CHECK(m.data[2 * 24 * 24 + i] == 0.0);
    }
  }
  SUBCASE("grid sum matches an independent loop") {
    const MaskSet m = masks_from_keypoints(s, 6, 6, 6.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < 36; ++i) sum += m.data[36 + i];
    // Output cell (i, j) covers input rows 4i..4i+3, centre at 4i + 1.5.
    double oracle = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const double dy = 4.0 * i + 1.5 - 10.0, dx = 4.0 * j + 1.5 - 7.0;
        oracle += std::exp(-(dy * dy + dx * dx) / 72.0);
      }
    CHECK(sum == doctest::Approx(oracle).epsilon(1e-13));
  }
  SUBCASE("variance convention uses sigma squared = 6") {
    const MaskSet m = masks_from_keypoints(s, 24, 24, 6.0, SigmaConvention::kVariance);
    CHECK(m.at(1, 10, 13) == doctest::Approx(std::exp(-36.0 / 12.0)).epsilon(1e-13));
  }
  SUBCASE("values in [0,1]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Example ex = gen_keypoint(seed, 32, 32, 6);
      const MaskSet m = masks_from_keypoints(ex.semantics, 2, 2, 6.0);
      for (double v : m.data) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
}

TEST_CASE("dataset file round-trip is bit-exact") {
  const auto examples = generate_examples({SemanticMode::kScene, 10, 16, 16, 4, 99});
  const Dataset ds = make_dataset(SemanticMode::kScene, 16, 16, 4, examples);
  const fs::path path = temp_path("roundtrip.sdl");
  write_dataset(path, ds);
  const Dataset back = read_dataset(path);
  CHECK(same_content(ds, back));
  CHECK(back.header.mode == SemanticMode::kScene);
  CHECK(back.header.count == 10);
  CHECK(back.header.height == 16);
  CHECK(back.header.width == 16);
  CHECK(back.header.channels == 4);

  // Re-encoding the decoded dataset reproduces the file byte for byte.
  CHECK(encode_dataset(back) == io::read_file(path));

  const auto kp = generate_examples({SemanticMode::kKeypoint, 3, 20, 24, 5, 7});
  const Dataset kds = make_dataset(SemanticMode::kKeypoint, 20, 24, 5, kp);
  CHECK(same_content(kds, decode_dataset(encode_dataset(kds))));
}

TEST_CASE("dataset header layout") {
  const Dataset ds = make_dataset(SemanticMode::kKeypoint, 16, 20, 3, generate_examples({SemanticMode::kKeypoint, 2, 16, 20, 3, 1}));
  const auto bytes = encode_dataset(ds);
  REQUIRE(bytes.size() == 4 + 5 * 4 + 2 * (3 + 3) * 16 * 20 * 4);
  CHECK(std::memcmp(bytes.data(), "SDL1", 4) == 0);
  std::uint32_t fields[5];
  std::memcpy(fields, bytes.data() + 4, sizeof fields);
  CHECK(fields[0] == 1);
  CHECK(fields[1] == 2);
  CHECK(fields[2] == 16);
  CHECK(fields[3] == 20);
  CHECK(fields[4] == 3);
}

TEST_CASE("dataset read errors") {
  const Dataset ds = make_dataset(SemanticMode::kScene, 16, 16, 3, generate_examples({SemanticMode::kScene, 4, 16, 16, 3, 5}));
  auto bytes = encode_dataset(ds);

  SUBCASE("truncation") {
    auto cut = bytes;
    cut.resize(cut.size() - 17);
    try {
      decode_dataset(cut);
      FAIL("expected truncation");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::kTruncated);
    }
    auto header_only = bytes;
    header_only.resize(10);
    try {
      decode_dataset(header_only);
      FAIL("expected truncation");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::kTruncated);
    }
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    try {
      decode_dataset(bytes);
      FAIL("expected bad magic");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::kBadMagic);
    }
  }
  SUBCASE("version mismatch") {
    bytes[3] = '2';
    try {
      decode_dataset(bytes);
      FAIL("expected version error");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::kVersion);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_dataset(temp_path("does_not_exist.sdl")), IoError); }
}

TEST_CASE("png encoding") {
  const Example ex = gen_scene(5, 16, 16, 4);
  const auto tile = png::from_planar(std::span<const float>(ex.image), 16, 16);
  const auto sem = png::colorize(ex.semantics);
  const auto g = png::grid({{tile, sem}, {sem, tile}});
  CHECK(g.width == 2 * 17 + 1);
  CHECK(g.height == 2 * 17 + 1);
  const auto bytes = png::encode(g);
  REQUIRE(bytes.size() > 33);
  CHECK(bytes[0] == 0x89);
  CHECK(std::memcmp(bytes.data() + 1, "PNG", 3) == 0);
  CHECK(std::memcmp(bytes.data() + 12, "IHDR", 4) == 0);
  CHECK(bytes[16 + 3] == 35);  // big-endian width
}
