#pragma once

#include <bit>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "edcflow/nn.hpp"

// Checkpoint container: "EDCK" magic, u32 version, u64 manifest length, JSON
// manifest, then a raw little-endian f32 payload. The manifest maps each
// parameter name to shape, dtype and byte offset within the payload and can
// carry an arbitrary "meta" object.
namespace edcflow {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

inline constexpr char kCkptMagic[4] = {'E', 'D', 'C', 'K'};
inline constexpr uint32_t kCkptVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const ad::ParamStore<T>& params,
                     const nlohmann::json& meta = nlohmann::json()) {
  nlohmann::json manifest;
  if (!meta.is_null()) manifest["meta"] = meta;
  manifest["dtype"] = "f32";
  auto& entries = manifest["entries"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : params.entries()) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["dtype"] = "f32";
    e["offset"] = offset;
    entries.push_back(std::move(e));
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  manifest["payload_bytes"] = offset;

  const std::string mstr = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), ErrorKind::ParseError, "cannot open " + path + " for writing");
  out.write(kCkptMagic, 4);
  uint32_t ver = kCkptVersion;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  uint64_t mlen = mstr.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  std::vector<float> buf;
  for (const auto& [name, t] : params.entries()) {
    buf.resize(static_cast<size_t>(t.numel()));
    auto v = t.data();
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(v[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  check(out.good(), ErrorKind::ParseError, "write failed for " + path);
}

inline nlohmann::json read_checkpoint_manifest(const std::string& path, std::ifstream* keep_open = nullptr) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::ParseError, "cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  check(in.good() && std::equal(magic, magic + 4, kCkptMagic), ErrorKind::ParseError,
        "not a checkpoint file: " + path);
  uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  check(ver == kCkptVersion, ErrorKind::ParseError, "unsupported checkpoint version");
  uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), static_cast<std::streamsize>(mlen));
  check(in.good(), ErrorKind::ParseError, "truncated checkpoint manifest");
  auto manifest = nlohmann::json::parse(mstr, nullptr, false);
  check(!manifest.is_discarded(), ErrorKind::ParseError, "invalid checkpoint manifest");
  if (keep_open) *keep_open = std::move(in);
  return manifest;
}

template <typename T>
void load_checkpoint(const std::string& path, ad::ParamStore<T>& params) {
  std::ifstream in;
  auto manifest = read_checkpoint_manifest(path, &in);
  const std::streampos payload_start = in.tellg();
  size_t matched = 0;
  for (const auto& e : manifest.at("entries")) {
    const std::string name = e.at("name").get<std::string>();
    check(params.has(name), ErrorKind::ShapeError, "checkpoint parameter not in model: " + name);
    auto& t = params.at(name);
    const Shape shape = e.at("shape").get<Shape>();
    check(shape == t.shape(), ErrorKind::ShapeError,
          "checkpoint shape mismatch for " + name + ": " + shape_str(shape) + " vs " + shape_str(t.shape()));
    const uint64_t offset = e.at("offset").get<uint64_t>();
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    check(in.good(), ErrorKind::ParseError, "truncated checkpoint payload at " + name);
    auto v = t.data();
    for (size_t i = 0; i < buf.size(); ++i) v[i] = static_cast<T>(buf[i]);
    ++matched;
  }
  check(matched == params.entries().size(), ErrorKind::ShapeError,
        "checkpoint is missing model parameters");
}

}  // namespace edcflow
