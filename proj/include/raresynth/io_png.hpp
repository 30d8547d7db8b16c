#pragma once

#include <string>

#include "raresynth/tensor.hpp"

namespace raresynth {

// 8-bit grayscale PNG, values clamped from [0,1]. Deterministic bytes for
// identical inputs (fixed compression settings, no ancillary chunks).
void write_png_gray8(const std::string& path, const Tensor<float>& image);

// Decodes any grayscale/RGB(A)/palette PNG to grayscale [0,1], shape (1,H,W).
// 16-bit inputs are scaled by 1/65535, 8-bit by 1/255; RGB uses Rec.601 luma.
Tensor<float> read_png_gray(const std::string& path);

// Bilinear resample to (target_h, target_w); passthrough when sizes match.
Tensor<float> resize_bilinear(const Tensor<float>& image, int target_h, int target_w);

}  // namespace raresynth
