#include "mstn/haze.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mstn/image_io.hpp"
#include "mstn/rng.hpp"

namespace mstn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kClearKinds[] = {"checker", "gradient", "blobs", "text"};
const char* kDepthKinds[] = {"ramp", "radial", "smooth_noise"};

void fill_checker(std::vector<double>& v, int h, int w, Rng& rng) {
  const int cell = std::max(2, std::min(h, w) / 8);
  for (int c = 0; c < 3; ++c) {
    double c0 = rng.uniform01();
    double c1 = rng.uniform01();
    if (std::abs(c0 - c1) < 0.05) c1 = std::fmod(c0 + 0.5, 1.0);
    double* p = v.data() + static_cast<size_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        p[y * w + x] = ((y / cell + x / cell) % 2) ? c1 : c0;
      }
    }
  }
}

void fill_gradient(std::vector<double>& v, int h, int w, Rng& rng) {
  // One orientation per channel: horizontal, vertical, diagonal.
  for (int c = 0; c < 3; ++c) {
    const double a = rng.uniform01();
    const double b = rng.uniform01();
    double* p = v.data() + static_cast<size_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double f;
        if (c == 0) {
          f = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
        } else if (c == 1) {
          f = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
        } else {
          f = (h + w > 2) ? static_cast<double>(x + y) / (w + h - 2) : 0.0;
        }
        p[y * w + x] = a + (b - a) * f;
      }
    }
  }
}

void fill_blobs(std::vector<double>& v, int h, int w, Rng& rng) {
  const int nblobs = 4 + static_cast<int>(rng.next_below(4));
  struct Blob {
    double cy, cx, sy, sx, amp[3];
  };
  std::vector<Blob> blobs(nblobs);
  for (auto& bl : blobs) {
    bl.cy = rng.uniform(0, h - 1);
    bl.cx = rng.uniform(0, w - 1);
    bl.sy = rng.uniform(h * 0.05 + 1.0, h * 0.3 + 1.0);
    bl.sx = rng.uniform(w * 0.05 + 1.0, w * 0.3 + 1.0);
    for (double& a : bl.amp) a = rng.uniform(0.2, 1.0);
  }
  for (int c = 0; c < 3; ++c) {
    double* p = v.data() + static_cast<size_t>(c) * h * w;
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const auto& bl : blobs) {
          const double dy = (y - bl.cy) / bl.sy;
          const double dx = (x - bl.cx) / bl.sx;
          acc += bl.amp[c] * std::exp(-0.5 * (dy * dy + dx * dx));
        }
        p[y * w + x] = acc;
        lo = std::min(lo, acc);
        hi = std::max(hi, acc);
      }
    }
    const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
    for (int i = 0; i < h * w; ++i) p[i] = (p[i] - lo) * scale;
  }
}

void fill_text(std::vector<double>& v, int h, int w, Rng& rng) {
  // Light background with dark glyph-like bars; shared geometry, per-channel
  // shades, so edges appear at several spatial frequencies.
  double bg[3], fg[3];
  for (int c = 0; c < 3; ++c) {
    bg[c] = rng.uniform(0.7, 1.0);
    fg[c] = rng.uniform(0.0, 0.3);
  }
  for (int c = 0; c < 3; ++c) {
    double* p = v.data() + static_cast<size_t>(c) * h * w;
    std::fill(p, p + static_cast<size_t>(h) * w, bg[c]);
  }
  const int nbars = 6 + static_cast<int>(rng.next_below(6));
  for (int i = 0; i < nbars; ++i) {
    const bool vertical = rng.next_below(2) == 0;
    const int thick = 1 + static_cast<int>(rng.next_below(std::max(1, h / 10)));
    const int len = std::max(2, static_cast<int>(rng.next_below(
                                    std::max(2, (vertical ? h : w) / 2))) +
                                    (vertical ? h : w) / 4);
    const int y0 = static_cast<int>(rng.next_below(h));
    const int x0 = static_cast<int>(rng.next_below(w));
    for (int c = 0; c < 3; ++c) {
      double* p = v.data() + static_cast<size_t>(c) * h * w;
      for (int t = 0; t < thick; ++t) {
        for (int l = 0; l < len; ++l) {
          const int y = vertical ? y0 + l : y0 + t;
          const int x = vertical ? x0 + t : x0 + l;
          if (y < h && x < w) p[y * w + x] = fg[c];
        }
      }
    }
  }
}

// Coarse grid bilinearly interpolated up; low-pass by construction.
void fill_smooth_noise(std::vector<double>& v, int h, int w, Rng& rng,
                       double d_max) {
  const int gh = 8, gw = 8;
  std::vector<double> grid(gh * gw);
  for (auto& g : grid) g = rng.uniform01();
  double lo = 1e300, hi = -1e300;
  for (int y = 0; y < h; ++y) {
    const double fy = h > 1 ? static_cast<double>(y) / (h - 1) * (gh - 1) : 0.0;
    const int y0 = std::min(static_cast<int>(fy), gh - 2);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx =
          w > 1 ? static_cast<double>(x) / (w - 1) * (gw - 1) : 0.0;
      const int x0 = std::min(static_cast<int>(fx), gw - 2);
      const double tx = fx - x0;
      const double a = grid[y0 * gw + x0], b = grid[y0 * gw + x0 + 1];
      const double c = grid[(y0 + 1) * gw + x0], d = grid[(y0 + 1) * gw + x0 + 1];
      const double val = (1 - ty) * ((1 - tx) * a + tx * b) +
                         ty * ((1 - tx) * c + tx * d);
      v[y * w + x] = val;
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
  }
  const double scale = hi > lo ? d_max / (hi - lo) : 0.0;
  for (auto& x : v) x = (x - lo) * scale;
}

json record_to_json(const SceneRecord& r) {
  json j;
  j["id"] = r.id;
  j["beta"] = r.beta;
  j["A"] = r.airlight;
  j["depth_kind"] = r.depth_kind;
  j["seed"] = r.seed;
  j["clear_path"] = r.clear_path;
  j["hazy_path"] = r.hazy_path;
  return j;
}

}  // namespace

HazeRanges HazeRanges::from_name(const std::string& name) {
  if (name == "indoor") return indoor();
  if (name == "outdoor") return outdoor();
  throw ConfigError("unknown haze preset '" + name + "' (indoor, outdoor)");
}

Tensor<double> synth_clear(const std::string& kind, int h, int w,
                           uint64_t seed) {
  if (h < 8 || w < 8) throw ConfigError("synth_clear: H,W must be >= 8");
  Rng rng(seed, 0x636c656172);  // stream tag: "clear"
  std::vector<double> v(static_cast<size_t>(3) * h * w, 0.0);
  if (kind == "checker") {
    fill_checker(v, h, w, rng);
  } else if (kind == "gradient") {
    fill_gradient(v, h, w, rng);
  } else if (kind == "blobs") {
    fill_blobs(v, h, w, rng);
  } else if (kind == "text") {
    fill_text(v, h, w, rng);
  } else {
    throw ConfigError("synth_clear: unknown kind '" + kind +
                      "' (checker, gradient, blobs, text)");
  }
  return Tensor<double>::from_data({1, 3, h, w}, std::move(v));
}

Tensor<double> synth_depth(const std::string& kind, int h, int w,
                           uint64_t seed, double d_max) {
  if (d_max <= 0) throw ConfigError("synth_depth: d_max must be > 0");
  Rng rng(seed, 0x6465707468);  // stream tag: "depth"
  std::vector<double> v(static_cast<size_t>(h) * w, 0.0);
  if (kind == "ramp") {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        v[y * w + x] = w > 1 ? d_max * x / (w - 1) : 0.0;
      }
    }
  } else if (kind == "radial") {
    const int cy = h / 2, cx = w / 2;
    double rmax = 0.0;
    for (int y : {0, h - 1}) {
      for (int x : {0, w - 1}) {
        rmax = std::max(rmax, std::hypot(double(y - cy), double(x - cx)));
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        v[y * w + x] =
            rmax > 0 ? d_max * std::hypot(double(y - cy), double(x - cx)) / rmax
                     : 0.0;
      }
    }
  } else if (kind == "smooth_noise") {
    fill_smooth_noise(v, h, w, rng, d_max);
  } else {
    throw ConfigError("synth_depth: unknown kind '" + kind +
                      "' (ramp, radial, smooth_noise)");
  }
  return Tensor<double>::from_data({1, 1, h, w}, std::move(v));
}

Tensor<double> transmission(const Tensor<double>& depth, double beta) {
  if (beta <= 0) throw ConfigError("transmission: beta must be > 0");
  std::vector<double> t(depth.data().begin(), depth.data().end());
  for (auto& x : t) x = std::exp(-beta * x);
  return Tensor<double>::from_data(depth.shape(), std::move(t));
}

Tensor<double> apply_haze(const Tensor<double>& clear,
                          const Tensor<double>& depth, double beta,
                          double airlight) {
  const Shape& cs = clear.shape();
  const Shape& ds = depth.shape();
  if (cs.n != 1 || cs.c != 3) {
    throw ShapeError("apply_haze: clear must be (1,3,H,W), got " + cs.str());
  }
  if (ds.n != 1 || ds.c != 1 || ds.h != cs.h || ds.w != cs.w) {
    throw ShapeError("apply_haze: depth " + ds.str() +
                     " does not match clear " + cs.str());
  }
  if (beta <= 0) throw ConfigError("apply_haze: beta must be > 0");
  if (airlight < 0 || airlight > 1) {
    throw ConfigError("apply_haze: airlight must lie in [0,1]");
  }
  const auto j = clear.data();
  const auto d = depth.data();
  const size_t plane = static_cast<size_t>(cs.h) * cs.w;
  std::vector<double> out(j.size());
  for (size_t i = 0; i < plane; ++i) {
    const double t = std::exp(-beta * d[i]);
    for (int c = 0; c < 3; ++c) {
      out[plane * c + i] = j[plane * c + i] * t + airlight * (1.0 - t);
    }
  }
  return Tensor<double>::from_data(cs, std::move(out));
}

InvertResult invert_haze(const Tensor<double>& hazy,
                         const Tensor<double>& t_map, double airlight,
                         double t_min) {
  const Shape& hs = hazy.shape();
  const Shape& ts = t_map.shape();
  if (hs.n != 1 || hs.c != 3) {
    throw ShapeError("invert_haze: hazy must be (1,3,H,W), got " + hs.str());
  }
  if (ts.n != 1 || ts.c != 1 || ts.h != hs.h || ts.w != hs.w) {
    throw ShapeError("invert_haze: t_map " + ts.str() +
                     " does not match hazy " + hs.str());
  }
  const auto iv = hazy.data();
  const auto tv = t_map.data();
  const size_t plane = static_cast<size_t>(hs.h) * hs.w;
  InvertResult res;
  std::vector<double> out(iv.size());
  for (size_t i = 0; i < plane; ++i) {
    double t = tv[i];
    if (t < t_min) {
      t = t_min;
      res.clamped = true;
    }
    for (int c = 0; c < 3; ++c) {
      out[plane * c + i] = (iv[plane * c + i] - airlight * (1.0 - t)) / t;
    }
  }
  res.clear = Tensor<double>::from_data(hs, std::move(out));
  return res;
}

DatasetManifest generate_dataset(int n, const HazeRanges& ranges, int h, int w,
                                 uint64_t seed, const std::string& out_dir,
                                 int threads) {
  if (n < 1) throw ConfigError("generate_dataset: n must be >= 1");
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "clear", ec);
  fs::create_directories(fs::path(out_dir) / "hazy", ec);
  if (ec) throw IoError("cannot create dataset directories under " + out_dir);

  DatasetManifest m;
  m.preset = ranges.preset;
  m.height = h;
  m.width = w;
  m.seed = seed;
  m.samples.resize(n);

  auto make_sample = [&](int i) {
    // Pure function of (seed, i): pick kinds round-robin, params from an
    // index-keyed stream.
    Rng rng(seed, static_cast<uint64_t>(i) + 1);
    SceneRecord r;
    {
      std::ostringstream id;
      id.width(4);
      id.fill('0');
      id << i;
      r.id = "sample_" + id.str();
    }
    r.beta = rng.uniform(ranges.beta_lo, ranges.beta_hi);
    r.airlight = rng.uniform(ranges.airlight_lo, ranges.airlight_hi);
    r.depth_kind = kDepthKinds[i % 3];
    r.seed = rng.next_u64();
    r.clear_path = "clear/" + r.id + ".png";
    r.hazy_path = "hazy/" + r.id + ".png";

    // Depth scaled so t stays above the inversion clamp: beta*d <= ln(1/0.051).
    const double d_max = std::min(std::log(1.0 / 0.051) / r.beta, 50.0);
    Tensor<double> clear = synth_clear(kClearKinds[i % 4], h, w, r.seed);
    Tensor<double> depth = synth_depth(r.depth_kind, h, w, r.seed, d_max);
    Tensor<double> hazy = apply_haze(clear, depth, r.beta, r.airlight);
    write_png_rgb((fs::path(out_dir) / r.clear_path).string(), clear);
    write_png_rgb((fs::path(out_dir) / r.hazy_path).string(), hazy);
    m.samples[i] = std::move(r);
  };

  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) make_sample(i);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (int i = t; i < n; i += threads) make_sample(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest under " + out_dir);
  out << manifest_to_json(m) << "\n";
  return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["preset"] = m.preset;
  j["height"] = m.height;
  j["width"] = m.width;
  j["seed"] = m.seed;
  json arr = json::array();
  for (const auto& r : m.samples) arr.push_back(record_to_json(r));
  j["samples"] = arr;
  return j.dump(2);
}

DatasetManifest manifest_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw IoError("manifest is not valid JSON: " + path);
  DatasetManifest m;
  try {
    m.preset = j.at("preset").get<std::string>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    for (const auto& e : j.at("samples")) {
      SceneRecord r;
      r.id = e.at("id").get<std::string>();
      r.beta = e.at("beta").get<double>();
      r.airlight = e.at("A").get<double>();
      r.depth_kind = e.at("depth_kind").get<std::string>();
      r.seed = e.at("seed").get<uint64_t>();
      r.clear_path = e.at("clear_path").get<std::string>();
      r.hazy_path = e.at("hazy_path").get<std::string>();
      m.samples.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    throw IoError("malformed manifest " + path + ": " + ex.what());
  }
  return m;
}

}  // namespace mstn
