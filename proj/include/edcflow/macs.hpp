#pragma once

#include "edcflow/updater.hpp"

namespace edcflow::macs {

// Closed-form multiply-accumulate and parameter counts per layer for one full
// inference (K iterations) at a given input size.
//
// Conventions: one multiply-accumulate = 1 MAC; bare additions, pooling and
// transcendentals are uncounted; a standalone multiply counts as 1 MAC; a
// bilinearly sampled value costs 4 MACs per output channel value.
struct CostEntry {
  std::string name;
  int64_t macs = 0;
  int64_t params = 0;
};

struct CostBreakdown {
  std::vector<CostEntry> entries;
  int64_t total_macs = 0;
  int64_t total_params = 0;

  // analytic quantities for the scaling checks, all per single pass
  int64_t cost_volume_macs = 0;   // all-pairs construction
  int64_t diff_layer_macs = 0;    // whole difference layer
  int64_t diff_core_macs = 0;     // warp + difference formation only
  int64_t dense_volume_macs = 0;  // hypothetical temporally dense volumes: g * N8^2 * dbar
  int iters = 0;

  int64_t macs_of(const std::string& prefix) const;
};

CostBreakdown count_model(const ModelConfig& cfg, int height, int width);

struct ScalingReport {
  double cost_slope_n = 0.0;       // log-log slope of cost-volume MACs vs N8
  double diff_slope_n = 0.0;       // log-log slope of difference-layer MACs vs N8
  double diff_t_ratio = 0.0;       // difference-layer MACs at g=10 over g=5
  double dense_t_ratio = 0.0;      // dense-volume count at g=10 over g=5
  std::vector<double> dense_over_core;  // per desk preset
  double min_dense_over_core = 0.0;
  bool slopes_ok = false;
  bool t_linear_ok = false;
  std::string text;
};

// Fits log-log slopes over the size sweep and compares the hypothetical
// temporally dense volume count against the difference-construction core at
// each desk preset. Throws InvalidConfig for sweeps with fewer than two sizes.
ScalingReport verify_scaling(const ModelConfig& base, const std::vector<std::pair<int, int>>& sweep_sizes,
                             const std::vector<std::pair<int, int>>& desk_presets);

std::string format_table(const CostBreakdown& b);

}  // namespace edcflow::macs
