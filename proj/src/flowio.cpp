#include "edcflow/flowio.hpp"

#include <bit>
#include <cmath>
#include <fstream>

namespace edcflow {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

FlowImage read_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::ParseError, "cannot open flow file " + path);
  char magic[4];
  in.read(magic, 4);
  check(in.good() && magic[0] == 'F' && magic[1] == 'L' && magic[2] == 'O' && magic[3] == '2',
        ErrorKind::ParseError, "not a FLO2 file: " + path);
  FlowImage img;
  in.read(reinterpret_cast<char*>(&img.width), 4);
  in.read(reinterpret_cast<char*>(&img.height), 4);
  check(in.good() && img.width > 0 && img.height > 0 && img.width < (1u << 20) && img.height < (1u << 20),
        ErrorKind::ParseError, "bad flow dimensions in " + path);
  img.data.resize(static_cast<size_t>(img.width) * img.height * 2);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  check(in.good(), ErrorKind::ParseError, "truncated flow payload in " + path);
  return img;
}

void write_flo(const std::string& path, const FlowImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), ErrorKind::ParseError, "cannot open " + path + " for writing");
  out.write("FLO2", 4);
  out.write(reinterpret_cast<const char*>(&img.width), 4);
  out.write(reinterpret_cast<const char*>(&img.height), 4);
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  check(out.good(), ErrorKind::ParseError, "write failed for " + path);
}

std::vector<uint8_t> finite_mask(const FlowImage& img) {
  std::vector<uint8_t> m(img.pixels(), 0);
  for (size_t i = 0; i < m.size(); ++i)
    m[i] = std::isfinite(img.data[2 * i]) && std::isfinite(img.data[2 * i + 1]) ? 1 : 0;
  return m;
}

}  // namespace edcflow
