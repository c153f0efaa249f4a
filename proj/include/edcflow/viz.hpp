#pragma once

#include "edcflow/flowio.hpp"

namespace edcflow {

// Color-wheel rendering: hue from atan2(dy, dx), saturation from the
// magnitude normalized to its 99th percentile, full value. Zero flow renders
// white. Output bytes are deterministic for a fixed input.
void write_flow_png(const std::string& path, const FlowImage& flow);

// 8-bit RGB PNG encoder
void write_png_rgb(const std::string& path, int width, int height, const std::vector<uint8_t>& rgb);

}  // namespace edcflow
