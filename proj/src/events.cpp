#include "edcflow/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace edcflow {

std::vector<double> normalize_timestamps(const EventStream& stream, int bins) {
  check(!stream.events.empty(), ErrorKind::EmptyWindow, "normalize_timestamps: empty stream");
  check(bins >= 1, ErrorKind::InvalidConfig, "normalize_timestamps: bins must be >= 1");
  int64_t t_min = stream.events.front().t, t_max = stream.events.front().t;
  for (const auto& e : stream.events) {
    t_min = std::min(t_min, e.t);
    t_max = std::max(t_max, e.t);
  }
  std::vector<double> out(stream.events.size());
  if (t_max == t_min) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  const double span = static_cast<double>(t_max - t_min);
  const double scale = static_cast<double>(bins - 1);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<double>(stream.events[i].t - t_min) / span * scale;
  return out;
}

VoxelGrid voxelize(const EventStream& stream, int bins) {
  check(bins >= 1, ErrorKind::InvalidConfig, "voxelize: bins must be >= 1");
  check(stream.width > 0 && stream.height > 0, ErrorKind::InvalidConfig, "voxelize: empty sensor size");
  VoxelGrid g;
  g.bins = bins;
  g.height = stream.height;
  g.width = stream.width;
  g.v.assign(static_cast<size_t>(bins) * stream.height * stream.width, 0.0);
  if (stream.events.empty()) return g;

  for (const auto& e : stream.events) {
    check(e.x >= 0 && e.x < stream.width && e.y >= 0 && e.y < stream.height, ErrorKind::OutOfBounds,
          "voxelize: event at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
              ") outside sensor " + std::to_string(stream.width) + "x" + std::to_string(stream.height));
    check(e.p == 1 || e.p == -1, ErrorKind::InvalidConfig, "voxelize: polarity must be -1 or +1");
  }

  // canonical accumulation order: independent of the incoming event order
  std::vector<size_t> order(stream.events.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const Event &ea = stream.events[a], &eb = stream.events[b];
    if (ea.y != eb.y) return ea.y < eb.y;
    if (ea.x != eb.x) return ea.x < eb.x;
    if (ea.t != eb.t) return ea.t < eb.t;
    return ea.p < eb.p;
  });

  auto tstar = normalize_timestamps(stream, bins);
  for (size_t i : order) {
    const Event& e = stream.events[i];
    const double ts = tstar[i];
    const int b0 = static_cast<int>(std::floor(ts));
    const double f = ts - static_cast<double>(b0);
    const double pol = static_cast<double>(e.p);
    if (b0 >= 0 && b0 < bins) g.at(b0, e.y, e.x) += pol * (1.0 - f);
    if (f != 0.0 && b0 + 1 < bins) g.at(b0 + 1, e.y, e.x) += pol * f;
  }
  return g;
}

EventStream slice_stream(const EventStream& s, int64_t t0, int64_t t1, bool closed_end) {
  EventStream out;
  out.width = s.width;
  out.height = s.height;
  out.t_start = t0;
  out.t_end = t1;
  for (const auto& e : s.events)
    if (e.t >= t0 && (closed_end ? e.t <= t1 : e.t < t1)) out.events.push_back(e);
  return out;
}

WindowSet split_windows(const EventStream& reference, const EventStream& current, int g, int bins) {
  check(g >= 1, ErrorKind::InvalidConfig, "split_windows: g must be >= 1");
  check(current.t_end > current.t_start, ErrorKind::InvalidConfig,
        "split_windows: current window must have positive duration");
  check(reference.width == current.width && reference.height == current.height, ErrorKind::InvalidConfig,
        "split_windows: sensor size mismatch");

  WindowSet ws;
  ws.g = g;
  const int64_t span = current.t_end - current.t_start;
  ws.dt_us = span / g;
  ws.grids.reserve(static_cast<size_t>(g) + 1);
  ws.grids.push_back(voxelize(reference, bins));
  for (int k = 0; k < g; ++k) {
    // equal partition; events on an interior boundary go to the later window
    const int64_t t0 = current.t_start + span * k / g;
    const int64_t t1 = (k + 1 == g) ? current.t_end : current.t_start + span * (k + 1) / g;
    auto sub = slice_stream(current, t0, t1, /*closed_end=*/k + 1 == g);
    ws.grids.push_back(voxelize(sub, bins));
  }
  return ws;
}

EventStream read_evt(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), ErrorKind::ParseError, "cannot open event file " + path);
  std::string magic;
  EventStream s;
  in >> magic >> s.width >> s.height;
  check(in.good() && magic == "EVT1", ErrorKind::ParseError, "bad event file header in " + path);
  check(s.width > 0 && s.height > 0, ErrorKind::ParseError, "bad sensor size in " + path);
  Event e;
  int pol;
  while (in >> e.x >> e.y >> e.t >> pol) {
    check(pol == 1 || pol == -1, ErrorKind::ParseError, "bad polarity in " + path);
    e.p = static_cast<int8_t>(pol);
    s.events.push_back(e);
  }
  check(in.eof(), ErrorKind::ParseError, "malformed event line in " + path);
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  if (!s.events.empty()) {
    s.t_start = s.events.front().t;
    s.t_end = s.events.back().t;
  }
  return s;
}

void write_evt(const std::string& path, const EventStream& s) {
  std::ofstream out(path, std::ios::trunc);
  check(out.good(), ErrorKind::ParseError, "cannot open " + path + " for writing");
  out << "EVT1 " << s.width << ' ' << s.height << '\n';
  for (const auto& e : s.events)
    out << e.x << ' ' << e.y << ' ' << e.t << ' ' << static_cast<int>(e.p) << '\n';
  check(out.good(), ErrorKind::ParseError, "write failed for " + path);
}

void flip_horizontal(VoxelGrid& g) {
  for (int b = 0; b < g.bins; ++b)
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width / 2; ++x)
        std::swap(g.at(b, y, x), g.at(b, y, g.width - 1 - x));
}

void flip_vertical(VoxelGrid& g) {
  for (int b = 0; b < g.bins; ++b)
    for (int y = 0; y < g.height / 2; ++y)
      for (int x = 0; x < g.width; ++x)
        std::swap(g.at(b, y, x), g.at(b, g.height - 1 - y, x));
}

void flip_horizontal(WindowSet& w) {
  for (auto& g : w.grids) flip_horizontal(g);
}

void flip_vertical(WindowSet& w) {
  for (auto& g : w.grids) flip_vertical(g);
}

WindowSet crop(const WindowSet& w, int x0, int y0, int cw, int ch) {
  WindowSet out;
  out.g = w.g;
  out.dt_us = w.dt_us;
  out.grids.reserve(w.grids.size());
  for (const auto& g : w.grids) {
    check(x0 >= 0 && y0 >= 0 && x0 + cw <= g.width && y0 + ch <= g.height, ErrorKind::InvalidConfig,
          "crop: window outside grid");
    VoxelGrid c;
    c.bins = g.bins;
    c.height = ch;
    c.width = cw;
    c.v.resize(static_cast<size_t>(g.bins) * ch * cw);
    for (int b = 0; b < g.bins; ++b)
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) c.at(b, y, x) = g.at(b, y0 + y, x0 + x);
    out.grids.push_back(std::move(c));
  }
  return out;
}

}  // namespace edcflow
