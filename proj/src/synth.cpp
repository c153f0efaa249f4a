#include "edcflow/synth.hpp"

#include <algorithm>
#include <cmath>

namespace edcflow::synth {

namespace {

// periodic bilinear texture sampling
double sample_tex(const Scene& s, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  auto wrap = [](int64_t v, int n) {
    int64_t m = v % n;
    return static_cast<int>(m < 0 ? m + n : m);
  };
  const int x0 = wrap(static_cast<int64_t>(fx), s.width);
  const int x1 = wrap(static_cast<int64_t>(fx) + 1, s.width);
  const int y0 = wrap(static_cast<int64_t>(fy), s.height);
  const int y1 = wrap(static_cast<int64_t>(fy) + 1, s.height);
  return (1.0 - ay) * ((1.0 - ax) * s.tex(y0, x0) + ax * s.tex(y0, x1)) +
         ay * ((1.0 - ax) * s.tex(y1, x0) + ax * s.tex(y1, x1));
}

// log intensity with a floor that keeps black pixels finite
inline double log_intensity(double v) { return std::log(0.01 + v); }

}  // namespace

Sample generate(const Scene& scene, uint64_t seed, int g) {
  check(g >= 1, ErrorKind::InvalidConfig, "generate: g must be >= 1");
  check(scene.contrast > 0, ErrorKind::InvalidConfig, "generate: contrast threshold must be positive");
  check(static_cast<int>(scene.texture.size()) == scene.width * scene.height, ErrorKind::InvalidConfig,
        "generate: texture size mismatch");
  const double mn = *std::min_element(scene.texture.begin(), scene.texture.end());
  const double mx = *std::max_element(scene.texture.begin(), scene.texture.end());
  check(mx > mn, ErrorKind::DegenerateScene, "generate: constant texture produces no events");

  // timeline: reference window [0, dt), current window [dt, dt + dur]
  const int64_t dur = scene.duration_us;
  const int64_t dt = dur / g;
  const int steps_per_window = 20;
  const int total_steps = steps_per_window * (g + 1);
  const double step_us = static_cast<double>(dur + dt) / static_cast<double>(total_steps);

  const size_t np = static_cast<size_t>(scene.width) * scene.height;
  std::vector<double> l_ref(np), l_prev(np);
  auto intensity_at = [&](int x, int y, double t_us) {
    // displacement fraction relative to the current window
    const double a = (t_us - static_cast<double>(dt)) / static_cast<double>(dur);
    return sample_tex(scene, static_cast<double>(x) - scene.vx * a, static_cast<double>(y) - scene.vy * a);
  };
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      const double v = log_intensity(intensity_at(x, y, 0.0));
      l_ref[static_cast<size_t>(y) * scene.width + x] = v;
      l_prev[static_cast<size_t>(y) * scene.width + x] = v;
    }

  std::vector<Event> all;
  double t_prev = 0.0;
  for (int s = 1; s <= total_steps; ++s) {
    const double t_now = step_us * s;
    for (int y = 0; y < scene.height; ++y)
      for (int x = 0; x < scene.width; ++x) {
        const size_t i = static_cast<size_t>(y) * scene.width + x;
        const double l_now = log_intensity(intensity_at(x, y, t_now));
        double diff = l_now - l_ref[i];
        while (std::abs(diff) >= scene.contrast) {
          const int8_t pol = diff > 0 ? 1 : -1;
          // crossing position along the step, linear in log intensity
          const double target = l_ref[i] + (pol > 0 ? scene.contrast : -scene.contrast);
          double frac = (target - l_prev[i]) / (l_now - l_prev[i]);
          frac = std::min(1.0, std::max(0.0, frac));
          const double t_ev = t_prev + frac * (t_now - t_prev);
          Event e;
          e.x = x;
          e.y = y;
          e.t = static_cast<int64_t>(std::llround(t_ev));
          e.p = pol;
          all.push_back(e);
          l_ref[i] = target;
          diff = l_now - l_ref[i];
        }
        l_prev[i] = l_now;
      }
    t_prev = t_now;
  }

  // optional uniform background noise
  if (scene.noise_rate > 0) {
    Rng rng(seed ^ 0xabcdef1234567890ull);
    const double expected = scene.noise_rate * static_cast<double>(np) *
                            (static_cast<double>(dur + dt) / static_cast<double>(dur));
    const int64_t count = static_cast<int64_t>(expected);
    for (int64_t k = 0; k < count; ++k) {
      Event e;
      e.x = static_cast<int32_t>(rng.uniform_int(scene.width));
      e.y = static_cast<int32_t>(rng.uniform_int(scene.height));
      e.t = rng.uniform_int(dur + dt);
      e.p = rng.uniform() < 0.5 ? int8_t(-1) : int8_t(1);
      all.push_back(e);
    }
  }

  std::stable_sort(all.begin(), all.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
  });

  Sample out;
  out.reference.width = out.current.width = scene.width;
  out.reference.height = out.current.height = scene.height;
  out.reference.t_start = 0;
  out.reference.t_end = dt;
  out.current.t_start = dt;
  out.current.t_end = dt + dur;
  for (const auto& e : all) {
    if (e.t < 0) continue;
    if (e.t < dt)
      out.reference.events.push_back(e);
    else if (e.t <= dt + dur)
      out.current.events.push_back(e);
  }

  out.gt = FlowImage::zeros(static_cast<uint32_t>(scene.width), static_cast<uint32_t>(scene.height));
  out.valid.assign(np, 0);
  const float qnan = std::numeric_limits<float>::quiet_NaN();
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      const double tx = static_cast<double>(x) + scene.vx;
      const double ty = static_cast<double>(y) + scene.vy;
      const bool ok = tx >= 0.0 && tx <= static_cast<double>(scene.width - 1) && ty >= 0.0 &&
                      ty <= static_cast<double>(scene.height - 1);
      const auto ux = static_cast<uint32_t>(x), uy = static_cast<uint32_t>(y);
      if (ok) {
        out.gt.u(ux, uy) = static_cast<float>(scene.vx);
        out.gt.v(ux, uy) = static_cast<float>(scene.vy);
        out.valid[static_cast<size_t>(y) * scene.width + x] = 1;
      } else {
        out.gt.u(ux, uy) = qnan;
        out.gt.v(ux, uy) = qnan;
      }
    }
  return out;
}

WindowSet to_windows(const Sample& s, int g, int bins) {
  return split_windows(s.reference, s.current, g, bins);
}

std::vector<double> make_texture(TextureKind kind, int width, int height, Rng& rng) {
  std::vector<double> tex(static_cast<size_t>(width) * height, 0.0);
  switch (kind) {
    case TextureKind::checkerboard: {
      const double period = rng.uniform(6.0, 16.0);
      const double phase_x = rng.uniform(0.0, period);
      const double phase_y = rng.uniform(0.0, period);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const int cx = static_cast<int>(std::floor((x + phase_x) / period));
          const int cy = static_cast<int>(std::floor((y + phase_y) / period));
          tex[static_cast<size_t>(y) * width + x] = ((cx + cy) & 1) ? 0.85 : 0.15;
        }
      break;
    }
    case TextureKind::blobs: {
      const int k = 6 + static_cast<int>(rng.uniform_int(6));
      std::vector<double> cx(k), cy(k), sg(k), amp(k);
      for (int i = 0; i < k; ++i) {
        cx[i] = rng.uniform(0.0, width);
        cy[i] = rng.uniform(0.0, height);
        sg[i] = rng.uniform(2.0, 8.0);
        amp[i] = rng.uniform(0.4, 1.0);
      }
      double mx = 1e-9;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          double v = 0;
          for (int i = 0; i < k; ++i) {
            const double dx = x - cx[i], dy = y - cy[i];
            v += amp[i] * std::exp(-(dx * dx + dy * dy) / (2 * sg[i] * sg[i]));
          }
          tex[static_cast<size_t>(y) * width + x] = v;
          mx = std::max(mx, v);
        }
      for (auto& v : tex) v = 0.05 + 0.9 * (v / mx);
      break;
    }
    case TextureKind::bars: {
      const double angle = rng.uniform(0.0, M_PI);
      const double freq = rng.uniform(0.25, 0.9);
      const double phase = rng.uniform(0.0, 2 * M_PI);
      const double nx = std::cos(angle), ny = std::sin(angle);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double s = std::sin(freq * (nx * x + ny * y) + phase);
          tex[static_cast<size_t>(y) * width + x] = s > 0 ? 0.8 : 0.2;
        }
      break;
    }
  }
  return tex;
}

std::vector<Sample> make_dataset(const DatasetConfig& cfg) {
  check(cfg.count >= 1, ErrorKind::InvalidConfig, "make_dataset: count must be >= 1");
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(cfg.count));
  Rng rng(cfg.seed);
  const TextureKind kinds[3] = {TextureKind::checkerboard, TextureKind::blobs, TextureKind::bars};
  for (int i = 0; i < cfg.count; ++i) {
    Scene sc;
    sc.width = cfg.width;
    sc.height = cfg.height;
    sc.duration_us = cfg.duration_us;
    sc.contrast = cfg.contrast;
    sc.noise_rate = cfg.noise_rate;
    sc.texture = make_texture(kinds[i % 3], cfg.width, cfg.height, rng);
    // uniform in the disc of radius max_disp
    for (;;) {
      const double vx = rng.uniform(-cfg.max_disp, cfg.max_disp);
      const double vy = rng.uniform(-cfg.max_disp, cfg.max_disp);
      if (vx * vx + vy * vy <= cfg.max_disp * cfg.max_disp) {
        sc.vx = vx;
        sc.vy = vy;
        break;
      }
    }
    out.push_back(generate(sc, cfg.seed + static_cast<uint64_t>(i) * 1000003ull, 5));
  }
  return out;
}

}  // namespace edcflow::synth
