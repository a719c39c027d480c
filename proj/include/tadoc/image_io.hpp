#pragma once

#include <string>

#include "tadoc/image.hpp"

namespace tadoc {

// Dispatches on extension: .png, .pgm (gray), .ppm (RGB). 8-bit only;
// pixels quantize with round-half-up on save and map back to [0,1] on load.
RasterImage load_image(const std::string& path);
void save_image(const RasterImage& img, const std::string& path);

RasterImage load_png(const std::string& path);
void save_png(const RasterImage& img, const std::string& path);

RasterImage load_pnm(const std::string& path);
void save_pnm(const RasterImage& img, const std::string& path);

}  // namespace tadoc
