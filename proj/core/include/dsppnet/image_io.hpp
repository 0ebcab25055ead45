#pragma once

#include <string>

#include "dsppnet/tensor.hpp"

namespace dsppnet {

// Readers return [C,H,W] tensors with values scaled to [0,1] (8-bit depth).
// PGM is binary P5, PPM binary P6, PNG gray or RGB via libpng (alpha
// stripped, 16-bit narrowed).  All throw std::runtime_error with the path on
// malformed input.
Tensor read_pgm(const std::string& path);
Tensor read_png(const std::string& path);

// Dispatch on the (case-insensitive) file extension .pgm / .png.
Tensor read_image(const std::string& path);
bool image_extension_supported(const std::string& path);

// Writers clamp to [0,1] and quantize to 8 bits (round half up).  write_pgm
// accepts [H,W] or [1,H,W]; write_ppm accepts [3,H,W].
void write_pgm(const std::string& path, const Tensor& image);
void write_ppm(const std::string& path, const Tensor& image);

// Red-blend visualization: each gray base pixel is linearly faded toward
// pure red by the heat value. `base` and `heat` are [H,W] or [1,H,W] in
// [0,1].  Written as binary PPM.
void write_overlay_ppm(const std::string& path, const Tensor& base,
                       const Tensor& heat);

}  // namespace dsppnet
