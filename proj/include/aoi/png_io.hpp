#pragma once

#include <string>

#include "aoi/core.hpp"

namespace aoi {

// 8-bit PNG, RGB for color, single channel for gray. Deterministic output:
// fixed compression settings, no ancillary chunks.
void write_png(const ColorImage& img, const std::string& path);
void write_png(const GrayImage& img, const std::string& path);
ColorImage read_png_color(const std::string& path);
GrayImage read_png_gray(const std::string& path);

}  // namespace aoi
