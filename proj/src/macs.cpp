#include "edcflow/macs.hpp"

#include <cmath>
#include <sstream>

namespace edcflow::macs {

namespace {

int64_t conv_macs(int64_t oc, int64_t ic, int64_t k, int64_t out_px) { return oc * ic * k * k * out_px; }
int64_t conv_params(int64_t oc, int64_t ic, int64_t k) { return oc * ic * k * k + oc; }

struct Builder {
  CostBreakdown b;
  void add(const std::string& name, int64_t macs, int64_t params) {
    b.entries.push_back({name, macs, params});
    b.total_macs += macs;
    b.total_params += params;
  }
};

}  // namespace

int64_t CostBreakdown::macs_of(const std::string& prefix) const {
  int64_t n = 0;
  for (const auto& e : entries)
    if (e.name.rfind(prefix, 0) == 0) n += e.macs;
  return n;
}

CostBreakdown count_model(const ModelConfig& cfg, int height, int width) {
  cfg.validate();
  check(height % 8 == 0 && width % 8 == 0, ErrorKind::InvalidConfig,
        "count_model: input size must be divisible by 8");
  Builder bl;
  const int64_t g = cfg.g, bins = cfg.bins;
  const int64_t half = cfg.half_channels();
  const int64_t d = cfg.d, dbar = cfg.dbar;
  const int64_t n2 = static_cast<int64_t>(height / 2) * (width / 2);
  const int64_t n4 = static_cast<int64_t>(height / 4) * (width / 4);
  const int64_t n8 = static_cast<int64_t>(height / 8) * (width / 8);
  const int64_t nfull = static_cast<int64_t>(height) * width;
  const bool quarter = cfg.res == UpdateRes::quarter;
  const int64_t nu = quarter ? n4 : n8;
  const int64_t du = cfg.update_channels();
  const int64_t dr = du / cfg.reduction;
  const int64_t K = cfg.iters;

  // shared-weight feature trunk over g+1 windows; parameters counted once
  const int64_t wins = g + 1;
  bl.add("encoder.feature.stem", wins * conv_macs(half, bins, 3, n2), conv_params(half, bins, 3));
  bl.add("encoder.feature.half_blocks", wins * 4 * conv_macs(half, half, 3, n2),
         4 * conv_params(half, half, 3));
  bl.add("encoder.feature.to_quarter", wins * conv_macs(d, half, 3, n4), conv_params(d, half, 3));
  bl.add("encoder.feature.quarter_blocks", wins * 4 * conv_macs(d, d, 3, n4),
         4 * conv_params(d, d, 3));
  bl.add("encoder.feature.to_eighth", wins * conv_macs(dbar, d, 3, n8), conv_params(dbar, d, 3));
  bl.add("encoder.feature.eighth_blocks", wins * 4 * conv_macs(dbar, dbar, 3, n8),
         4 * conv_params(dbar, dbar, 3));

  const int64_t hc = cfg.hidden + cfg.ctx;
  bl.add("encoder.context.stem", conv_macs(half, bins, 3, n2), conv_params(half, bins, 3));
  bl.add("encoder.context.half_blocks", 4 * conv_macs(half, half, 3, n2),
         4 * conv_params(half, half, 3));
  bl.add("encoder.context.to_quarter", conv_macs(hc, half, 3, n4), conv_params(hc, half, 3));
  bl.add("encoder.context.quarter_blocks", 4 * conv_macs(hc, hc, 3, n4), 4 * conv_params(hc, hc, 3));

  const int64_t taps =
      (2 * static_cast<int64_t>(cfg.corr_radius) + 1) * (2 * cfg.corr_radius + 1);
  const int64_t corr_ch = cfg.corr_levels * taps;
  if (cfg.use_corr) {
    bl.b.cost_volume_macs = n8 * n8 * dbar;
    bl.add("cost_volume.build", bl.b.cost_volume_macs, 0);
    bl.add("corr.lookup", K * 4 * corr_ch * n8, 0);
    if (quarter) bl.add("corr.upsample", K * 4 * corr_ch * n4, 0);
    bl.add("corr.enc1", K * conv_macs(cfg.corr_mid, corr_ch, 3, nu),
           conv_params(cfg.corr_mid, corr_ch, 3));
    bl.add("corr.enc2", K * conv_macs(cfg.corr_dim, cfg.corr_mid, 3, nu),
           conv_params(cfg.corr_dim, cfg.corr_mid, 3));
  }

  if (cfg.use_diff) {
    const int64_t warp_core = 4 * g * du * nu;  // differences themselves are additions
    bl.b.diff_core_macs = warp_core;
    bl.add("diff.warp", K * warp_core, 0);
    bl.add("diff.former", K * (g + 1) * dr * du * nu, du * dr + dr);
    bl.add("diff.latter", K * (g + 1) * dr * 9 * nu, dr * 9 + dr);
    const int64_t ns = static_cast<int64_t>(cfg.scales.size());
    for (int s : cfg.scales) {
      const int64_t ts = g / s;
      int64_t macs = 0, params = 0;
      switch (cfg.agg) {
        case diff::AggStyle::dwconv3d:
          macs = dr * 27 * ts * nu + dr * dr * ts * nu  // (3,3,3) depthwise + pointwise
                 + dr * ts * 9 * nu + du * dr * nu;     // temporal-collapse depthwise + pointwise
          params = dr * 27 + dr + dr * dr + dr + dr * ts * 9 + dr + du * dr + du;
          break;
        case diff::AggStyle::add:
          macs = conv_macs(du, dr, 3, nu);
          params = conv_params(du, dr, 3);
          break;
        case diff::AggStyle::concat:
          macs = conv_macs(du, ts * dr, 3, nu);
          params = conv_params(du, ts * dr, 3);
          break;
        case diff::AggStyle::gru:
          macs = ts * (3 * conv_macs(du, du + dr, 3, nu) + 3 * du * nu);
          params = 3 * conv_params(du, du + dr, 3);
          break;
      }
      bl.add("diff.agg_s" + std::to_string(s), K * macs, params);
    }
    bl.add("diff.attn", K * (2 * ns * ns + ns * du * nu), 2 * (ns * ns + ns));
    bl.add("diff.proj", K * conv_macs(du, du, 1, nu), conv_params(du, du, 1));
    bl.b.diff_layer_macs = bl.b.macs_of("diff.") / K;
  }
  bl.b.dense_volume_macs = g * n8 * n8 * dbar;

  const int64_t cm = cfg.motion_channels();
  bl.add("fuse.attention", K * (2 * cm * (cm / cfg.se_reduction) + cm * nu),
         2 * cm * (cm / cfg.se_reduction) + cm / cfg.se_reduction + cm);

  const int64_t gin = cm + 2 + cfg.ctx;
  bl.add("gru.gates", K * (3 * conv_macs(cfg.hidden, cfg.hidden + gin, 3, nu) + 3 * cfg.hidden * nu),
         3 * conv_params(cfg.hidden, cfg.hidden + gin, 3));
  const int64_t fh = cfg.flow_head();
  bl.add("flow_head", K * (conv_macs(fh, cfg.hidden, 3, nu) + conv_macs(2, fh, 3, nu)),
         conv_params(fh, cfg.hidden, 3) + conv_params(2, fh, 3));
  const int64_t f = cfg.upsample_factor();
  bl.add("mask_head",
         K * (conv_macs(cfg.mask_mid, cfg.hidden, 3, nu) + conv_macs(9 * f * f, cfg.mask_mid, 1, nu)),
         conv_params(cfg.mask_mid, cfg.hidden, 3) + conv_params(9 * f * f, cfg.mask_mid, 1));
  bl.add("upsample.convex", K * 9 * 2 * nfull, 0);

  bl.b.iters = cfg.iters;
  return std::move(bl.b);
}

namespace {

double loglog_slope(const std::vector<std::pair<double, double>>& pts) {
  check(pts.size() >= 2, ErrorKind::InvalidConfig, "slope fit needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(pts.size());
  for (auto [x, y] : pts) {
    const double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

ScalingReport verify_scaling(const ModelConfig& base, const std::vector<std::pair<int, int>>& sweep_sizes,
                             const std::vector<std::pair<int, int>>& desk_presets) {
  check(sweep_sizes.size() >= 2, ErrorKind::InvalidConfig,
        "verify_scaling: need at least two sizes in the sweep");
  ScalingReport r;
  std::vector<std::pair<double, double>> cost_pts, diff_pts;
  for (auto [h, w] : sweep_sizes) {
    auto b = count_model(base, h, w);
    const double n8 = static_cast<double>(h / 8) * (w / 8);
    cost_pts.push_back({n8, static_cast<double>(b.cost_volume_macs)});
    diff_pts.push_back({n8, static_cast<double>(b.diff_layer_macs)});
  }
  r.cost_slope_n = loglog_slope(cost_pts);
  r.diff_slope_n = loglog_slope(diff_pts);

  // window-count scaling with the scale set held fixed
  ModelConfig c5 = base, c10 = base;
  c5.g = 5;
  c10.g = 10;
  const auto [h0, w0] = sweep_sizes.front();
  auto b5 = count_model(c5, h0, w0);
  auto b10 = count_model(c10, h0, w0);
  r.diff_t_ratio = static_cast<double>(b10.diff_layer_macs) / static_cast<double>(b5.diff_layer_macs);
  r.dense_t_ratio =
      static_cast<double>(b10.dense_volume_macs) / static_cast<double>(b5.dense_volume_macs);

  for (auto [h, w] : desk_presets) {
    auto b = count_model(base, h, w);
    r.dense_over_core.push_back(static_cast<double>(b.dense_volume_macs) /
                                static_cast<double>(b.diff_core_macs));
  }
  r.min_dense_over_core = r.dense_over_core.empty()
                              ? 0.0
                              : *std::min_element(r.dense_over_core.begin(), r.dense_over_core.end());

  r.slopes_ok = std::abs(r.cost_slope_n - 2.0) <= 0.1 && std::abs(r.diff_slope_n - 1.0) <= 0.1;
  r.t_linear_ok = r.diff_t_ratio >= 1.8 && r.diff_t_ratio <= 2.2 && r.dense_t_ratio >= 1.8 &&
                  r.dense_t_ratio <= 2.2;

  std::ostringstream os;
  os << "cost-volume slope vs N: " << r.cost_slope_n << " (expect 2.0 +/- 0.1)\n"
     << "difference-layer slope vs N: " << r.diff_slope_n << " (expect 1.0 +/- 0.1)\n"
     << "difference-layer MACs g=10/g=5: " << r.diff_t_ratio << " (expect [1.8, 2.2])\n"
     << "dense-volume count g=10/g=5: " << r.dense_t_ratio << "\n"
     << "dense volume over difference core:";
  for (double v : r.dense_over_core) os << ' ' << v;
  os << "\n";
  r.text = os.str();
  return r;
}

std::string format_table(const CostBreakdown& b) {
  std::ostringstream os;
  os << "  " << std::string(62, '-') << "\n";
  char line[128];
  std::snprintf(line, sizeof(line), "  %-34s %14s %12s\n", "layer", "MACs", "params");
  os << line;
  os << "  " << std::string(62, '-') << "\n";
  for (const auto& e : b.entries) {
    std::snprintf(line, sizeof(line), "  %-34s %14lld %12lld\n", e.name.c_str(),
                  static_cast<long long>(e.macs), static_cast<long long>(e.params));
    os << line;
  }
  os << "  " << std::string(62, '-') << "\n";
  std::snprintf(line, sizeof(line), "  %-34s %14lld %12lld\n", "total",
                static_cast<long long>(b.total_macs), static_cast<long long>(b.total_params));
  os << line;
  return os.str();
}

}  // namespace edcflow::macs
