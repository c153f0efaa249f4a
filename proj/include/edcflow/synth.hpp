#pragma once

#include "edcflow/events.hpp"
#include "edcflow/flowio.hpp"

namespace edcflow::synth {

// Uniformly translating textured scene observed by an ideal contrast-threshold
// sensor. Velocity is in pixels per current-window duration.
struct Scene {
  int width = 64;
  int height = 64;
  std::vector<double> texture;  // (height, width) intensities in [0, 1]
  double vx = 0.0;
  double vy = 0.0;
  int64_t duration_us = 100000;
  double contrast = 0.35;
  double noise_rate = 0.0;  // expected background events per pixel per window

  double tex(int y, int x) const { return texture[static_cast<size_t>(y) * width + x]; }
};

struct Sample {
  EventStream reference;  // window [t_start - dt, t_start)
  EventStream current;    // window [t_start, t_end]
  FlowImage gt;           // full-resolution flow; NaN at invalid pixels
  std::vector<uint8_t> valid;
};

// Simulates per-pixel log intensity under the translation and emits an event
// at every signed contrast-threshold crossing, timestamped by linear
// interpolation inside the simulation step (duration / (20 * g) per step).
// Ground truth is the constant velocity field; pixels whose displaced
// position leaves the frame are masked invalid.
Sample generate(const Scene& scene, uint64_t seed, int g);

WindowSet to_windows(const Sample& s, int g, int bins);

enum class TextureKind { checkerboard, blobs, bars };

std::vector<double> make_texture(TextureKind kind, int width, int height, Rng& rng);

struct DatasetConfig {
  int count = 1;
  int width = 64;
  int height = 64;
  double max_disp = 6.0;  // velocity disc radius, pixels per window
  int64_t duration_us = 100000;
  double contrast = 0.35;
  double noise_rate = 0.0;
  uint64_t seed = 0;
};

// Deterministic per seed. Textures cycle through checkerboards, random blobs,
// and oriented bars; velocities are uniform in the disc of radius max_disp.
std::vector<Sample> make_dataset(const DatasetConfig& cfg);

}  // namespace edcflow::synth
