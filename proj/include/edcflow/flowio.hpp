#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edcflow/common.hpp"

namespace edcflow {

// Dense 2-channel displacement map stored as interleaved (dx, dy) float32
// pairs, row-major. Invalid pixels carry NaN in both channels.
struct FlowImage {
  uint32_t width = 0;
  uint32_t height = 0;
  std::vector<float> data;  // 2 * width * height

  static FlowImage zeros(uint32_t w, uint32_t h) {
    FlowImage f;
    f.width = w;
    f.height = h;
    f.data.assign(static_cast<size_t>(w) * h * 2, 0.0f);
    return f;
  }

  float& u(uint32_t x, uint32_t y) { return data[2 * (static_cast<size_t>(y) * width + x)]; }
  float& v(uint32_t x, uint32_t y) { return data[2 * (static_cast<size_t>(y) * width + x) + 1]; }
  float u(uint32_t x, uint32_t y) const { return data[2 * (static_cast<size_t>(y) * width + x)]; }
  float v(uint32_t x, uint32_t y) const { return data[2 * (static_cast<size_t>(y) * width + x) + 1]; }
  size_t pixels() const { return static_cast<size_t>(width) * height; }
};

// "FLO2" magic, u32 LE width/height, then width*height (dx,dy) float32 pairs.
FlowImage read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowImage& img);

// 1 where both components are finite
std::vector<uint8_t> finite_mask(const FlowImage& img);

}  // namespace edcflow
