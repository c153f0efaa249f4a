#include "edcflow/viz.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace edcflow {

namespace {

void put_u32_be(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> head;
  put_u32_be(head, static_cast<uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  if (!payload.empty())
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
  if (!payload.empty()) crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  std::vector<uint8_t> tail;
  put_u32_be(tail, static_cast<uint32_t>(crc));
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

void hsv_to_rgb(double h, double s, double v, uint8_t rgb[3]) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  rgb[0] = static_cast<uint8_t>(std::lround(255.0 * (r + m)));
  rgb[1] = static_cast<uint8_t>(std::lround(255.0 * (g + m)));
  rgb[2] = static_cast<uint8_t>(std::lround(255.0 * (b + m)));
}

}  // namespace

void write_png_rgb(const std::string& path, int width, int height, const std::vector<uint8_t>& rgb) {
  check(static_cast<size_t>(width) * height * 3 == rgb.size(), ErrorKind::ShapeError,
        "write_png_rgb: buffer size mismatch");
  // filter byte 0 per scanline
  std::vector<uint8_t> raw;
  raw.reserve(rgb.size() + static_cast<size_t>(height));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const uint8_t* row = rgb.data() + static_cast<size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  check(compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) == Z_OK,
        ErrorKind::ParseError, "png deflate failed");
  compressed.resize(bound);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), ErrorKind::ParseError, "cannot open " + path + " for writing");
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);
  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<uint32_t>(width));
  put_u32_be(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", compressed);
  write_chunk(out, "IEND", {});
  check(out.good(), ErrorKind::ParseError, "write failed for " + path);
}

void write_flow_png(const std::string& path, const FlowImage& flow) {
  const size_t np = flow.pixels();
  std::vector<double> mags;
  mags.reserve(np);
  for (size_t i = 0; i < np; ++i) {
    const double u = flow.data[2 * i], v = flow.data[2 * i + 1];
    if (std::isfinite(u) && std::isfinite(v)) mags.push_back(std::sqrt(u * u + v * v));
  }
  double p99 = 0.0;
  if (!mags.empty()) {
    const size_t k = std::min(mags.size() - 1, static_cast<size_t>(0.99 * static_cast<double>(mags.size())));
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
    p99 = mags[k];
  }

  std::vector<uint8_t> rgb(np * 3, 255);
  for (size_t i = 0; i < np; ++i) {
    const double u = flow.data[2 * i], v = flow.data[2 * i + 1];
    uint8_t px[3] = {255, 255, 255};
    if (std::isfinite(u) && std::isfinite(v)) {
      const double mag = std::sqrt(u * u + v * v);
      const double sat = p99 > 0 ? std::min(1.0, mag / p99) : 0.0;
      const double hue = std::atan2(v, u) * (180.0 / M_PI);
      hsv_to_rgb(hue, sat, 1.0, px);
    } else {
      px[0] = px[1] = px[2] = 0;  // invalid pixels render black
    }
    rgb[3 * i] = px[0];
    rgb[3 * i + 1] = px[1];
    rgb[3 * i + 2] = px[2];
  }
  write_png_rgb(path, static_cast<int>(flow.width), static_cast<int>(flow.height), rgb);
}

}  // namespace edcflow
