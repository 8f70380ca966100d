#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "chartlib/dataset.hpp"
#include "chartlib/io_util.hpp"
#include "support/oracles.hpp"

using namespace chartlib;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / "chartlib-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("save/load round trip is bit exact") {
  Dataset ds = oracle::random_dataset(4, 1, 1, 2, 2, 11);
  const fs::path dir = temp_dir("roundtrip");
  save_dataset(ds, dir);
  Dataset back = load_dataset(dir);

  REQUIRE(back.size() == 4);
  CHECK(back.cir == ds.cir);
  CHECK(back.timestamps == ds.timestamps);
  REQUIRE(back.has_positions);
  for (uint32_t l = 0; l < 4; ++l) {
    CHECK(back.positions[l].x == ds.positions[l].x);
    CHECK(back.positions[l].y == ds.positions[l].y);
  }
  CHECK(back.geometry.num_arrays == ds.geometry.num_arrays);
  CHECK(back.geometry.cols == ds.geometry.cols);
}

TEST_CASE("truncated csi payload is rejected") {
  Dataset ds = oracle::random_dataset(4, 1, 1, 2, 2, 12);
  const fs::path dir = temp_dir("truncated");
  save_dataset(ds, dir);
  // Drop the last 4 bytes (one float) from csi.bin.
  const auto size = fs::file_size(dir / "csi.bin");
  fs::resize_file(dir / "csi.bin", size - 4);
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("payload size mismatch"),
                       std::runtime_error);
}

TEST_CASE("non-monotone timestamps are rejected") {
  Dataset ds = oracle::random_dataset(3, 1, 1, 1, 1, 13);
  const fs::path dir = temp_dir("monotone");
  save_dataset(ds, dir);
  const double bad[3] = {0.0, 1.0, 1.0};
  ioutil::write_file(dir / "time.bin", bad, sizeof(bad));
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("non-monotone"),
                       std::runtime_error);
}

TEST_CASE("saving an empty dataset fails") {
  Dataset ds;
  ds.geometry.array_positions = {{0, 0}};
  ds.geometry.array_orientations = {0.0};
  CHECK_THROWS_WITH_AS(save_dataset(ds, temp_dir("empty")),
                       doctest::Contains("L >= 1"), std::invalid_argument);
}

TEST_CASE("overwrite needs the explicit flag") {
  Dataset ds = oracle::random_dataset(3, 1, 1, 1, 1, 14);
  const fs::path dir = temp_dir("overwrite");
  save_dataset(ds, dir);
  CHECK_THROWS_WITH_AS(save_dataset(ds, dir), doctest::Contains("overwrite"),
                       std::runtime_error);
  CHECK_NOTHROW(save_dataset(ds, dir, /*overwrite=*/true));
}

TEST_CASE("pos.bin with a third coordinate is accepted and dropped") {
  Dataset ds = oracle::random_dataset(3, 1, 1, 1, 1, 15);
  const fs::path dir = temp_dir("pos3d");
  save_dataset(ds, dir);
  std::vector<double> flat;
  for (uint32_t l = 0; l < 3; ++l) {
    flat.push_back(ds.positions[l].x);
    flat.push_back(ds.positions[l].y);
    flat.push_back(42.0);
  }
  ioutil::write_file<double>(dir / "pos.bin", flat);
  Dataset back = load_dataset(dir);
  CHECK(back.positions[2].x == ds.positions[2].x);
  CHECK(back.positions[2].y == ds.positions[2].y);
}

TEST_CASE("restrict_to_array slices the CIR tensor") {
  Dataset ds = oracle::random_dataset(5, 4, 2, 2, 3, 16);
  Dataset one = restrict_to_array(ds, 3);
  REQUIRE(one.geometry.num_arrays == 1);
  CHECK(one.size() == ds.size());
  CHECK(one.timestamps == ds.timestamps);
  CHECK(one.geometry.array_positions[0].x == ds.geometry.array_positions[2].x);

  const size_t per_array = ds.geometry.antennas_per_array() * ds.geometry.taps;
  for (uint32_t l = 0; l < 5; ++l) {
    auto full = ds.cir_of(l);
    auto sliced = one.cir_of(l);
    REQUIRE(sliced.size() == per_array);
    for (size_t t = 0; t < per_array; ++t)
      CHECK(sliced[t] == full[2 * per_array + t]);
  }

  SUBCASE("single-array restriction is the identity") {
    Dataset again = restrict_to_array(one, 1);
    CHECK(again.cir == one.cir);
    CHECK(again.timestamps == one.timestamps);
  }
  SUBCASE("out of range array number") {
    CHECK_THROWS_AS(restrict_to_array(ds, 5), std::invalid_argument);
    CHECK_THROWS_AS(restrict_to_array(ds, 0), std::invalid_argument);
  }
}

TEST_CASE("synthesize_cir peaks at the tap matching the distance") {
  SceneConfig cfg;
  cfg.polygon = {{-1, -1}, {30, -1}, {30, 30}, {-1, 30}};
  cfg.geometry.num_arrays = 1;
  cfg.geometry.rows = 1;
  cfg.geometry.cols = 1;
  cfg.geometry.taps = 13;
  cfg.geometry.sample_rate = 50e6;
  cfg.geometry.array_positions = {{0.0, 0.0}};
  cfg.geometry.array_orientations = {0.0};

  const double c0 = 299792458.0;
  const double d = 4.0 * c0 / 50e6;  // exactly 4 taps away
  std::vector<cfloat> h(cfg.geometry.cir_size());
  synthesize_cir(cfg, {d, 0.0}, h);

  size_t peak = 0;
  for (size_t t = 1; t < h.size(); ++t)
    if (std::abs(h[t]) > std::abs(h[peak])) peak = t;
  CHECK(peak == 4);
}

TEST_CASE("identical positions give identical CIR without noise") {
  SceneConfig cfg = default_scene(10, 3);
  std::vector<cfloat> a(cfg.geometry.cir_size()), b(a.size());
  synthesize_cir(cfg, {2.5, 3.5}, a);
  synthesize_cir(cfg, {2.5, 3.5}, b);
  CHECK(a == b);
}

TEST_CASE("synth_scene is deterministic given the seed") {
  SceneConfig cfg = default_scene(40, 99);
  cfg.noise_std = 0.05;
  Dataset d1 = synth_scene(cfg);
  Dataset d2 = synth_scene(cfg);
  CHECK(d1.cir == d2.cir);
  CHECK(d1.timestamps == d2.timestamps);
  for (uint32_t l = 0; l < d1.size(); ++l) {
    CHECK(d1.positions[l].x == d2.positions[l].x);
    CHECK(d1.positions[l].y == d2.positions[l].y);
  }
}

TEST_CASE("synth_scene stays inside the polygon and respects the acceleration cap") {
  SceneConfig cfg = default_scene(500, 21);
  Dataset ds = synth_scene(cfg);
  REQUIRE(ds.size() == 500);

  for (uint32_t l = 0; l < ds.size(); ++l)
    CHECK(point_in_polygon(ds.positions[l], cfg.polygon));

  // Finite-difference acceleration from the recorded track.
  const double dt = cfg.sample_interval;
  double max_acc = 0.0;
  for (uint32_t l = 2; l < ds.size(); ++l) {
    const Vec2 a = (ds.positions[l] - ds.positions[l - 1] * 2.0 + ds.positions[l - 2]) / (dt * dt);
    max_acc = std::max(max_acc, a.norm());
  }
  CHECK(max_acc <= cfg.max_acceleration + 1e-9);

  // Sorted in time.
  for (uint32_t l = 1; l < ds.size(); ++l)
    CHECK(ds.timestamps[l] > ds.timestamps[l - 1]);
}

TEST_CASE("degenerate polygon is rejected") {
  SceneConfig cfg = default_scene(10, 1);
  cfg.polygon = {{0, 0}, {1, 1}, {1, 0}, {0, 1}};  // self-intersecting
  CHECK_THROWS_AS(synth_scene(cfg), std::invalid_argument);
}

TEST_CASE("trajectory break detection") {
  Dataset ds = oracle::random_dataset(6, 1, 1, 1, 1, 31);
  ds.timestamps = {0.0, 1.0, 2.0, 30.0, 31.0, 32.0};
  ds.recompute_breaks();
  REQUIRE(ds.trajectory_breaks.size() == 1);
  CHECK(ds.trajectory_breaks[0] == 3);
}
