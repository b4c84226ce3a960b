#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duet/common.hpp"

namespace duet {

// 8-bit image, interleaved rows; channels is 1 (gray) or 3 (RGB).
struct Image8 {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> pixels;

  bool empty() const { return pixels.empty(); }
  uint8_t& at(int y, int x, int c) { return pixels[(y * width + x) * channels + c]; }
  uint8_t at(int y, int x, int c) const { return pixels[(y * width + x) * channels + c]; }
};

Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

// planar [C,H,W] doubles in [0,1] <-> interleaved 8-bit
ArrayX image_to_planar(const Image8& img);
Image8 planar_to_image(const ArrayX& data, int channels, int height, int width);

}  // namespace duet
