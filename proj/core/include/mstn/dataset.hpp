#pragma once

// In-memory dataset: the manifest plus decoded image pairs (float, ready for
// the trainer).

#include <string>
#include <vector>

#include "mstn/haze.hpp"
#include "mstn/tensor.hpp"

namespace mstn {

struct PairSample {
  SceneRecord record;
  Tensor<float> hazy;   // (1,3,H,W)
  Tensor<float> clear;  // (1,3,H,W)
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PairSample> samples;

  int height() const { return manifest.height; }
  int width() const { return manifest.width; }

  /// Loads manifest.json plus every referenced PNG pair from dir.
  static Dataset load(const std::string& dir);
};

}  // namespace mstn
