#pragma once

#include <string>

#include "nlos/phasor.hpp"

namespace nlos {

// 8-bit grayscale PNG with the fixed tone map used for all figures: linear
// between the 1st and 99th percentile of the pixel values.
void save_png_gray(const Image2D& img, const std::string& path);

}  // namespace nlos
