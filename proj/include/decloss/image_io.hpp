#pragma once

#include <string>

#include "decloss/tensor.hpp"

namespace decloss {

// A decoded raster: channels-first [3 x H x W], values in [0, 1]. Grayscale
// sources are expanded to three identical channels so every downstream path
// sees the same layout. bit_depth records the source depth (always 8 today).
struct ImageFile {
  Tensor pixels;
  std::string path;
  int bit_depth = 8;
};

// Reads an 8-bit PNG (gray, palette, or RGB) or binary PPM/PGM (maxval 255).
// The format is sniffed from the leading bytes, not the extension. Alpha
// channels, 16-bit depths, and anything else raise IoError naming the path.
ImageFile load_image(const std::string& path);

// Writes [C x H x W] values quantized by round(v * 255), clamped to [0, 255].
// The extension picks the container: .png / .ppm need C == 3, .pgm needs
// C == 1. save(load(x)) reproduces any supported 8-bit file's pixels exactly.
void save_image(const Tensor& image, const std::string& path);

}  // namespace decloss
