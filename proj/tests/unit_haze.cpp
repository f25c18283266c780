#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mstn/dataset.hpp"
#include "mstn/haze.hpp"
#include "mstn/image_io.hpp"
#include "oracles.hpp"

using namespace mstn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("procedural images stay in range and are deterministic") {
  for (const char* kind : {"checker", "gradient", "blobs", "text"}) {
    auto img = synth_clear(kind, 32, 24, 7);
    CHECK(img.shape() == Shape{1, 3, 32, 24});
    for (double v : img.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    auto again = synth_clear(kind, 32, 24, 7);
    CHECK(oracle::max_abs_diff(img, again) == 0.0);
    auto other = synth_clear(kind, 32, 24, 8);
    CHECK(oracle::max_abs_diff(img, other) > 0.0);
  }
  CHECK_THROWS_AS(synth_clear("plasma", 32, 32, 1), ConfigError);
  CHECK_THROWS_AS(synth_clear("checker", 4, 32, 1), ConfigError);
}

TEST_CASE("depth maps cover [0, d_max]") {
  for (const char* kind : {"ramp", "radial", "smooth_noise"}) {
    auto d = synth_depth(kind, 16, 20, 3, 5.0);
    CHECK(d.shape() == Shape{1, 1, 16, 20});
    double lo = 1e9, hi = -1e9;
    for (double v : d.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 5.0);
    CHECK(hi > 1.0);  // actually uses the range
  }
  CHECK_THROWS_AS(synth_depth("bogus", 16, 16, 1, 5.0), ConfigError);
}

TEST_CASE("transmission is exp(-beta*depth)") {
  auto d = Tensor<double>::from_data({1, 1, 1, 3}, {0.0, 1.0, 2.0});
  auto t = transmission(d, 0.5);
  CHECK(t.data()[0] == 1.0);
  CHECK(t.data()[1] == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(t.data()[2] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("haze model blends toward airlight with distance") {
  auto clear = Tensor<double>::full({1, 3, 1, 2}, 0.2);
  auto depth = Tensor<double>::from_data({1, 1, 1, 2}, {0.0, 100.0});
  auto hazy = apply_haze(clear, depth, 1.0, 0.9);
  CHECK(hazy.at(0, 0, 0, 0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(hazy.at(0, 1, 0, 1) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("apply_haze validates its inputs") {
  auto clear = Tensor<double>::zeros({1, 3, 4, 4});
  auto depth = Tensor<double>::zeros({1, 1, 4, 4});
  CHECK_THROWS_AS(apply_haze(clear, Tensor<double>::zeros({1, 1, 4, 5}), 1.0,
                             0.9),
                  ShapeError);
  CHECK_THROWS_AS(apply_haze(clear, depth, -1.0, 0.9), ConfigError);
  CHECK_THROWS_AS(apply_haze(clear, depth, 1.0, 1.5), ConfigError);
}

TEST_CASE("inversion with true parameters is exact away from the floor") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const double beta = rng.uniform(0.6, 1.8);
    const double airlight = rng.uniform(0.7, 1.0);
    const double d_max = std::log(1.0 / 0.06) / beta;  // keeps t >= 0.06
    auto clear = synth_clear("blobs", 24, 24, 100 + trial);
    auto depth = synth_depth("radial", 24, 24, 200 + trial, d_max);
    auto t = transmission(depth, beta);
    auto hazy = apply_haze(clear, depth, beta, airlight);
    auto inv = invert_haze(hazy, t, airlight);
    CHECK_FALSE(inv.clamped);
    CHECK(oracle::max_abs_diff(inv.clear, clear) < 1e-10);
  }
}

TEST_CASE("inversion clamps deep transmission and reports it") {
  auto clear = Tensor<double>::full({1, 3, 2, 2}, 0.3);
  auto depth = Tensor<double>::full({1, 1, 2, 2}, 100.0);  // t ~ 0
  auto t = transmission(depth, 1.0);
  auto hazy = apply_haze(clear, depth, 1.0, 0.8);
  auto inv = invert_haze(hazy, t, 0.8);
  CHECK(inv.clamped);
  for (double v : inv.clear.data()) CHECK(std::isfinite(v));
}

TEST_CASE("png roundtrip is lossless after quantization") {
  auto dir = fresh_dir("mstn_unit_png");
  auto img = synth_clear("gradient", 20, 30, 5);
  const std::string path = (dir / "img.png").string();
  write_png_rgb(path, img);
  auto back = read_png_rgb(path);
  CHECK(back.shape() == img.shape());
  CHECK(oracle::max_abs_diff(back, img) < 0.5 / 255.0 + 1e-9);
  // a re-encode of the decoded image is bit-exact
  const std::string path2 = (dir / "img2.png").string();
  write_png_rgb(path2, back);
  CHECK(oracle::max_abs_diff(read_png_rgb(path2), back) == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("read_png_rgb raises IoError on missing or corrupt files") {
  CHECK_THROWS_AS(read_png_rgb("/nonexistent/nope.png"), IoError);
  auto dir = fresh_dir("mstn_unit_badpng");
  const std::string path = (dir / "junk.png").string();
  std::ofstream(path) << "not a png at all";
  CHECK_THROWS_AS(read_png_rgb(path), IoError);
  fs::remove_all(dir);
}

TEST_CASE("generated datasets load back with matching parameters") {
  auto dir = fresh_dir("mstn_unit_gen");
  auto manifest = generate_dataset(4, HazeRanges::indoor(), 32, 32, 9,
                                   dir.string(), 1);
  CHECK(manifest.samples.size() == 4);
  CHECK(manifest.preset == "indoor");
  for (const auto& r : manifest.samples) {
    CHECK(r.beta >= 0.6);
    CHECK(r.beta <= 1.8);
    CHECK(r.airlight >= 0.7);
    CHECK(r.airlight <= 1.0);
    CHECK(fs::exists(dir / r.clear_path));
    CHECK(fs::exists(dir / r.hazy_path));
  }
  auto loaded = manifest_from_file((dir / "manifest.json").string());
  CHECK(loaded.samples.size() == 4);
  CHECK(loaded.samples[2].id == manifest.samples[2].id);
  CHECK(loaded.samples[2].beta == manifest.samples[2].beta);

  Dataset ds = Dataset::load(dir.string());
  CHECK(ds.samples.size() == 4);
  CHECK(ds.height() == 32);
  CHECK(ds.samples[0].hazy.shape() == Shape{1, 3, 32, 32});
  CHECK(ds.samples[0].clear.shape() == Shape{1, 3, 32, 32});
  fs::remove_all(dir);
}

TEST_CASE("hazy outputs differ from clear but stay in gamut") {
  auto dir = fresh_dir("mstn_unit_gen2");
  generate_dataset(2, HazeRanges::outdoor(), 24, 24, 10, dir.string(), 1);
  Dataset ds = Dataset::load(dir.string());
  for (const auto& s : ds.samples) {
    CHECK(oracle::max_abs_diff(s.hazy, s.clear) > 1e-3);
    for (float v : s.hazy.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("dataset generation is thread-count invariant") {
  auto d1 = fresh_dir("mstn_unit_thr1");
  auto d3 = fresh_dir("mstn_unit_thr3");
  auto m1 = generate_dataset(5, HazeRanges::indoor(), 16, 16, 21, d1.string(),
                             1);
  auto m3 = generate_dataset(5, HazeRanges::indoor(), 16, 16, 21, d3.string(),
                             3);
  REQUIRE(m1.samples.size() == m3.samples.size());
  for (size_t i = 0; i < m1.samples.size(); ++i) {
    CHECK(m1.samples[i].beta == m3.samples[i].beta);
    CHECK(m1.samples[i].seed == m3.samples[i].seed);
    std::ifstream a(d1 / m1.samples[i].hazy_path, std::ios::binary);
    std::ifstream b(d3 / m3.samples[i].hazy_path, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    CHECK_FALSE(sa.empty());
  }
  fs::remove_all(d1);
  fs::remove_all(d3);
}

TEST_CASE("unknown preset name is rejected") {
  CHECK_THROWS_AS(HazeRanges::from_name("underwater"), ConfigError);
  CHECK(HazeRanges::from_name("indoor").beta_hi == 1.8);
  CHECK(HazeRanges::from_name("outdoor").beta_lo == 0.04);
}
