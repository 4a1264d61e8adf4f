#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lumos {

struct GrayImage {
  std::vector<uint8_t> pixels;  // row-major
  int h = 0, w = 0;

  uint8_t at(int y, int x) const { return pixels[(size_t)y * w + x]; }
};

// 8-bit single-channel PNG. Any other bit depth or color type is converted to
// 8-bit gray on read; label images must already be single-channel 8-bit.
GrayImage read_png_gray8(const std::string& path);
void write_png_gray8(const std::string& path, const uint8_t* pixels, int h, int w);

}  // namespace lumos
