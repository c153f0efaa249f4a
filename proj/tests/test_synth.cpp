#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "edcflow/synth.hpp"

using namespace edcflow;

namespace {

synth::Scene edge_scene(int size, double vx, double vy) {
  synth::Scene s;
  s.width = s.height = size;
  s.texture.assign(static_cast<size_t>(size) * size, 0.1);
  // vertical step edge in the middle
  for (int y = 0; y < size; ++y)
    for (int x = size / 2; x < size; ++x) s.texture[static_cast<size_t>(y) * size + x] = 0.9;
  s.vx = vx;
  s.vy = vy;
  return s;
}

}  // namespace

TEST_CASE("zero velocity produces no events and zero ground truth") {
  auto sc = edge_scene(32, 0.0, 0.0);
  auto s = synth::generate(sc, 1, 5);
  CHECK(s.reference.events.empty());
  CHECK(s.current.events.empty());
  for (uint32_t y = 0; y < s.gt.height; ++y)
    for (uint32_t x = 0; x < s.gt.width; ++x) {
      CHECK(s.gt.u(x, y) == 0.0f);
      CHECK(s.gt.v(x, y) == 0.0f);
    }
}

TEST_CASE("ground truth equals the configured velocity on the valid mask") {
  auto sc = edge_scene(32, 3.0, -2.0);
  auto s = synth::generate(sc, 2, 5);
  int valid = 0;
  for (uint32_t y = 0; y < 32; ++y)
    for (uint32_t x = 0; x < 32; ++x) {
      if (!s.valid[y * 32 + x]) continue;
      ++valid;
      CHECK(s.gt.u(x, y) == 3.0f);
      CHECK(s.gt.v(x, y) == -2.0f);
    }
  CHECK(valid > 0);
}

TEST_CASE("valid mask excludes pixels displaced out of frame") {
  auto sc = edge_scene(16, 5.0, 0.0);
  auto s = synth::generate(sc, 3, 5);
  for (uint32_t y = 0; y < 16; ++y) {
    CHECK(s.valid[y * 16 + 0] == 1);
    CHECK(s.valid[y * 16 + 15] == 0);  // 15 + 5 leaves the frame
    CHECK(!std::isfinite(s.gt.u(15, y)));
  }
}

TEST_CASE("moving edge emits events with motion-dependent polarity") {
  // triangle ramp, continuous under the periodic texture wrap: away from the
  // two crest columns every pixel sits on a monotone slope, so the brightness
  // change sign tracks the motion direction
  auto ramp_scene = [](int size, double vx) {
    synth::Scene s;
    s.width = s.height = size;
    s.texture.resize(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double u = 2.0 * x / (size - 1.0) - 1.0;
        s.texture[static_cast<size_t>(y) * size + x] = 0.1 + 0.8 * (1.0 - std::abs(u));
      }
    s.vx = vx;
    s.contrast = 0.15;
    return s;
  };
  auto fwd = synth::generate(ramp_scene(32, 4.0), 4, 5);
  auto bwd = synth::generate(ramp_scene(32, -4.0), 4, 5);
  CHECK(!fwd.current.events.empty());
  CHECK(!bwd.current.events.empty());
  // polarity tallies per pixel flip when the motion reverses
  std::map<std::pair<int, int>, int> pf, pb;
  for (const auto& e : fwd.current.events) pf[{e.x, e.y}] += e.p;
  for (const auto& e : bwd.current.events) pb[{e.x, e.y}] += e.p;
  int opposite = 0, same = 0;
  for (const auto& [k, v] : pf) {
    auto it = pb.find(k);
    if (it == pb.end() || v == 0 || it->second == 0) continue;
    if ((v > 0) != (it->second > 0)) ++opposite;
    else ++same;
  }
  CHECK(opposite > same);
}

TEST_CASE("timestamps stay inside the windows and nondecreasing per pixel") {
  auto sc = edge_scene(24, 3.0, 1.0);
  auto s = synth::generate(sc, 5, 5);
  const int64_t dt = sc.duration_us / 5;
  std::map<std::pair<int, int>, int64_t> last;
  for (const auto& e : s.reference.events) {
    CHECK(e.t >= 0);
    CHECK(e.t < dt);
  }
  for (const auto& e : s.current.events) {
    CHECK(e.t >= dt);
    CHECK(e.t <= dt + sc.duration_us);
    auto key = std::make_pair(e.x, e.y);
    auto it = last.find(key);
    if (it != last.end()) CHECK(e.t >= it->second);
    last[key] = e.t;
  }
}

TEST_CASE("doubling the contrast threshold never increases the event count") {
  auto sc = edge_scene(32, 4.0, 2.0);
  sc.contrast = 0.2;
  auto lo = synth::generate(sc, 6, 5);
  sc.contrast = 0.4;
  auto hi = synth::generate(sc, 6, 5);
  const size_t n_lo = lo.reference.events.size() + lo.current.events.size();
  const size_t n_hi = hi.reference.events.size() + hi.current.events.size();
  CHECK(n_hi <= n_lo);
}

TEST_CASE("constant texture is rejected") {
  synth::Scene s;
  s.width = s.height = 8;
  s.texture.assign(64, 0.5);
  s.vx = 1.0;
  CHECK_THROWS_AS(synth::generate(s, 7, 5), Error);
  try {
    synth::generate(s, 7, 5);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateScene);
  }
}

TEST_CASE("window splitting of a generated sample matches g and bins") {
  auto sc = edge_scene(32, 2.0, 0.0);
  auto s = synth::generate(sc, 8, 5);
  auto ws = synth::to_windows(s, 5, 3);
  CHECK(ws.grids.size() == 6);
  for (const auto& g : ws.grids) {
    CHECK(g.bins == 3);
    CHECK(g.height == 32);
    CHECK(g.width == 32);
  }
}

TEST_CASE("datasets are deterministic per seed") {
  synth::DatasetConfig cfg;
  cfg.count = 4;
  cfg.width = cfg.height = 24;
  cfg.seed = 99;
  auto a = synth::make_dataset(cfg);
  auto b = synth::make_dataset(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].current.events.size() == b[i].current.events.size());
    for (size_t j = 0; j < a[i].current.events.size(); ++j) {
      CHECK(a[i].current.events[j].t == b[i].current.events[j].t);
      CHECK(a[i].current.events[j].x == b[i].current.events[j].x);
    }
    for (size_t j = 0; j < a[i].gt.data.size(); ++j) {
      const float u = a[i].gt.data[j], v = b[i].gt.data[j];
      CHECK((u == v || (std::isnan(u) && std::isnan(v))));
    }
  }
}

TEST_CASE("dataset velocities respect the disc bound") {
  synth::DatasetConfig cfg;
  cfg.count = 12;
  cfg.width = cfg.height = 16;
  cfg.max_disp = 3.0;
  cfg.seed = 5;
  auto ds = synth::make_dataset(cfg);
  for (const auto& s : ds)
    for (size_t i = 0; i < s.gt.pixels(); ++i) {
      const float u = s.gt.data[2 * i], v = s.gt.data[2 * i + 1];
      if (!std::isfinite(u)) continue;
      CHECK(std::sqrt(u * u + v * v) <= 3.0 + 1e-6);
    }
}

TEST_CASE("zero count is rejected") {
  synth::DatasetConfig cfg;
  cfg.count = 0;
  CHECK_THROWS_AS(synth::make_dataset(cfg), Error);
}

TEST_CASE("texture generators cover the intensity range") {
  Rng rng(11);
  for (auto kind : {synth::TextureKind::checkerboard, synth::TextureKind::blobs,
                    synth::TextureKind::bars}) {
    auto tex = synth::make_texture(kind, 32, 32, rng);
    const double mn = *std::min_element(tex.begin(), tex.end());
    const double mx = *std::max_element(tex.begin(), tex.end());
    CHECK(mx > mn);
    CHECK(mn >= 0.0);
    CHECK(mx <= 1.0);
  }
}

TEST_CASE("background noise injection adds events") {
  auto sc = edge_scene(24, 2.0, 0.0);
  auto clean = synth::generate(sc, 12, 5);
  sc.noise_rate = 0.5;
  auto noisy = synth::generate(sc, 12, 5);
  CHECK(noisy.current.events.size() + noisy.reference.events.size() >
        clean.current.events.size() + clean.reference.events.size());
}
