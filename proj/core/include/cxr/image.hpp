#pragma once

#include <string>

#include "cxr/tensor.hpp"

namespace cxr {

// Bilinear interpolation with half-pixel center alignment; output values
// stay within the source min/max, and resizing to the source size is the
// identity. Rejects non-finite pixels.
Tensor resize_image(const Tensor& image, std::size_t out_h, std::size_t out_w);

// Binary PGM (P5), maxval up to 65535 (two bytes big-endian above 255).
// Pixels are normalized to [0, 1] by the header maxval.
Tensor read_pgm(const std::string& path);  // -> (1, H, W)
void write_pgm(const std::string& path, const Tensor& image, unsigned maxval = 255);

// Loads NPY ((H,W) or (C,H,W), taken as already normalized) or PGM into a
// (C, H, W) tensor.
Tensor load_image(const std::string& path);

}  // namespace cxr
