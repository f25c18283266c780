#pragma once

// 8-bit RGB PNG in/out. Values map to [0,1] on read and are quantized by
// round(255*v) (after clamping) on write.

#include <string>

#include "mstn/tensor.hpp"

namespace mstn {

/// Reads any PNG as (1,3,H,W) in [0,1]; grayscale and paletted images are
/// expanded to RGB, alpha is dropped.
Tensor<double> read_png_rgb(const std::string& path);

void write_png_rgb(const std::string& path, const Tensor<double>& image);
void write_png_rgb(const std::string& path, const Tensor<float>& image);

}  // namespace mstn
