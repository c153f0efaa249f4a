#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edcflow/common.hpp"

namespace edcflow {

struct Event {
  int32_t x = 0;
  int32_t y = 0;
  int64_t t = 0;  // microseconds
  int8_t p = 1;   // polarity, -1 or +1
};

// Events ordered by nondecreasing timestamp within [t_start, t_end].
struct EventStream {
  std::vector<Event> events;
  int width = 0;
  int height = 0;
  int64_t t_start = 0;
  int64_t t_end = 0;
};

// B temporal bins of polarity mass, bilinear in normalized time.
struct VoxelGrid {
  int bins = 0;
  int height = 0;
  int width = 0;
  std::vector<double> v;  // (bins, height, width) row-major

  double& at(int b, int y, int x) { return v[(static_cast<size_t>(b) * height + y) * width + x]; }
  double at(int b, int y, int x) const { return v[(static_cast<size_t>(b) * height + y) * width + x]; }
};

// grids[0] is the reference window; grids[1..g] are the sub-windows of the
// current stream in time order. All grids share bins/height/width.
struct WindowSet {
  std::vector<VoxelGrid> grids;
  int g = 0;
  int64_t dt_us = 0;
};

// t* = (t - t_min)/(t_max - t_min) * (bins - 1), over the stream's own events;
// a zero-length span maps everything to 0.
std::vector<double> normalize_timestamps(const EventStream& stream, int bins);

// V(b,x,y) = sum_i p_i * max(0, 1 - |b - t*_i|). Accumulation order is
// canonicalized by (y, x, t, p) so the result is independent of the input
// event order. An empty stream yields an all-zero grid.
VoxelGrid voxelize(const EventStream& stream, int bins);

// Splits the current stream into g equal windows (half-open, last closed) and
// voxelizes the reference plus each sub-window with the same bin count.
WindowSet split_windows(const EventStream& reference, const EventStream& current, int g, int bins);

// helpers used by splitting and by the loaders
EventStream slice_stream(const EventStream& s, int64_t t0, int64_t t1, bool closed_end);

// Event text format: header "EVT1 <width> <height>", then one "x y t_us p"
// line per event with p in {-1, 1}.
EventStream read_evt(const std::string& path);
void write_evt(const std::string& path, const EventStream& s);

// mirror augmentation at the grid level
void flip_horizontal(VoxelGrid& g);
void flip_vertical(VoxelGrid& g);
void flip_horizontal(WindowSet& w);
void flip_vertical(WindowSet& w);
WindowSet crop(const WindowSet& w, int x0, int y0, int cw, int ch);

}  // namespace edcflow
