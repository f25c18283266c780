#pragma once

// Synthetic paired data via the atmospheric scattering model
// I = J*t + A*(1-t), t = exp(-beta * depth), and its exact inversion.
// Everything here runs in double so the algebraic roundtrip holds to 1e-6
// even after the 1/t amplification near t_min.

#include <cstdint>
#include <string>
#include <vector>

#include "mstn/tensor.hpp"

namespace mstn {

struct HazeRanges {
  std::string preset;  // "indoor" or "outdoor"
  double beta_lo = 0.0, beta_hi = 0.0;
  double airlight_lo = 0.0, airlight_hi = 0.0;

  static HazeRanges indoor() { return {"indoor", 0.6, 1.8, 0.7, 1.0}; }
  static HazeRanges outdoor() { return {"outdoor", 0.04, 0.2, 0.8, 1.0}; }
  static HazeRanges from_name(const std::string& name);
};

/// Procedural RGB image, (1,3,H,W) in [0,1]. kind: checker | gradient |
/// blobs | text.
Tensor<double> synth_clear(const std::string& kind, int h, int w,
                           uint64_t seed);

/// Depth map as (1,1,H,W), values in [0, d_max]. kind: ramp | radial |
/// smooth_noise.
Tensor<double> synth_depth(const std::string& kind, int h, int w,
                           uint64_t seed, double d_max);

/// Per-pixel transmission t = exp(-beta * depth).
Tensor<double> transmission(const Tensor<double>& depth, double beta);

/// I = J*t + A*(1-t), t shared across the three channels.
Tensor<double> apply_haze(const Tensor<double>& clear,
                          const Tensor<double>& depth, double beta,
                          double airlight);

struct InvertResult {
  Tensor<double> clear;
  bool clamped = false;  // true iff any t fell below t_min
};

/// J = (I - A*(1-t)) / max(t, t_min); exact inverse when no clamping occurs.
InvertResult invert_haze(const Tensor<double>& hazy,
                         const Tensor<double>& t_map, double airlight,
                         double t_min = 0.05);

struct SceneRecord {
  std::string id;
  double beta = 0.0;
  double airlight = 0.0;
  std::string depth_kind;
  uint64_t seed = 0;
  std::string clear_path;  // relative to the dataset directory
  std::string hazy_path;
};

struct DatasetManifest {
  std::string preset;
  int height = 0, width = 0;
  uint64_t seed = 0;
  std::vector<SceneRecord> samples;
};

/// Writes n clear/hazy PNG pairs plus manifest.json under out_dir. Each
/// sample is a pure function of (seed, index), so generation parallelizes
/// across `threads` workers with identical output.
DatasetManifest generate_dataset(int n, const HazeRanges& ranges, int h, int w,
                                 uint64_t seed, const std::string& out_dir,
                                 int threads = 1);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_file(const std::string& path);

}  // namespace mstn
