#pragma once

#include "edcflow/nn.hpp"

namespace edcflow::diff {

enum class AggStyle { dwconv3d, add, concat, gru };

inline const char* agg_style_name(AggStyle s) {
  switch (s) {
    case AggStyle::dwconv3d: return "dwconv3d";
    case AggStyle::add: return "add";
    case AggStyle::concat: return "concat";
    case AggStyle::gru: return "gru";
  }
  return "?";
}

inline AggStyle agg_style_from(const std::string& s) {
  if (s == "dwconv3d") return AggStyle::dwconv3d;
  if (s == "add") return AggStyle::add;
  if (s == "concat") return AggStyle::concat;
  if (s == "gru") return AggStyle::gru;
  fail(ErrorKind::InvalidConfig, "unknown aggregation style: " + s);
}

// intermediate flow toward window i under linear motion: (i/g) * flow
template <typename T>
ad::Tensor<T> scale_flow(ad::Tape<T>* tape, const ad::Tensor<T>& flow, int i, int g) {
  check(i >= 1 && i <= g, ErrorKind::InvalidConfig,
        "scale_flow: window index " + std::to_string(i) + " outside [1, " + std::to_string(g) + "]");
  return ad::affine(tape, flow, static_cast<T>(static_cast<double>(i) / static_cast<double>(g)), T(0));
}

// pixel-center coordinate grid, channel 0 = x, channel 1 = y
template <typename T>
ad::Tensor<T> base_grid(int64_t h, int64_t w) {
  auto t = ad::Tensor<T>::zeros({2, h, w});
  auto d = t.data();
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      d[y * w + x] = static_cast<T>(x);
      d[h * w + y * w + x] = static_cast<T>(y);
    }
  return t;
}

// Warp features of windows 1..g toward the reference with the (i/g)-scaled
// flow; index 0 passes through untouched. features: (g+1, d, h, w),
// flow: (1, 2, h, w). Returns (g+1, d, h, w).
template <typename T>
ad::Tensor<T> warp_all(ad::Tape<T>* tape, const ad::Tensor<T>& features, const ad::Tensor<T>& flow) {
  check(features.rank() == 4, ErrorKind::ShapeError, "warp_all: (g+1,d,h,w) features required");
  check(flow.rank() == 4 && flow.dim(0) == 1 && flow.dim(1) == 2 && flow.dim(2) == features.dim(2) &&
            flow.dim(3) == features.dim(3),
        ErrorKind::ShapeError, "warp_all: flow must be (1,2,h,w) at feature resolution");
  const int g = static_cast<int>(features.dim(0)) - 1;
  const int64_t d = features.dim(1), h = features.dim(2), w = features.dim(3);
  auto flow3 = ad::reshape(tape, flow, {int64_t(2), h, w});
  auto base = base_grid<T>(h, w);
  std::vector<ad::Tensor<T>> parts;
  parts.reserve(static_cast<size_t>(g) + 1);
  parts.push_back(ad::reshape(tape, ad::slice0(tape, features, 0), {int64_t(1), d, h, w}));
  for (int i = 1; i <= g; ++i) {
    auto coords = ad::add(tape, base, scale_flow(tape, flow3, i, g));
    auto warped = ad::bilinear_sample(tape, ad::slice0(tape, features, i), coords);
    parts.push_back(ad::reshape(tape, warped, {int64_t(1), d, h, w}));
  }
  return ad::concat(tape, parts, 0);
}

struct ScaleSpec {
  int stride = 1;
  int64_t t_len = 0;  // floor(g / stride)
};

template <typename T>
struct ScaleAggParams {
  AggStyle style = AggStyle::dwconv3d;
  ScaleSpec spec;
  // dwconv3d style: two depthwise-separable 3D convolutions
  ad::Tensor<T> dw1_w, dw1_b, pw1_w, pw1_b;
  ad::Tensor<T> dw2_w, dw2_b, pw2_w, pw2_b;
  // add / concat styles: one 3x3 convolution
  ad::Conv2dLayer<T> conv;
  // gru style: recurrence over the difference sequence
  ad::GruParams<T> gru;
};

template <typename T>
struct DiffLayerParams {
  int g = 5;
  int reduction = 1;
  int64_t d = 64;   // feature channels at the update resolution
  int64_t dr = 64;  // d / reduction
  ad::Conv2dLayer<T> former;           // 1x1, d -> d/r, shared across windows
  ad::Tensor<T> latter_w, latter_b;    // depthwise 3x3, shared across windows
  std::vector<ScaleAggParams<T>> scales;
  ad::Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;  // scale attention on pooled scalars
  ad::Conv2dLayer<T> proj;             // final 1x1 channel adjustment, d -> d
};

template <typename T>
DiffLayerParams<T> make_diff_layer(ad::ParamStore<T>& ps, const std::string& name, int g, int64_t d,
                                   int reduction, const std::vector<int>& scales, AggStyle style,
                                   Rng& rng) {
  check(!scales.empty(), ErrorKind::InvalidConfig, "difference layer: scale set must be non-empty");
  for (size_t i = 0; i < scales.size(); ++i) {
    check(scales[i] >= 1 && scales[i] <= g, ErrorKind::InvalidConfig,
          "difference layer: stride " + std::to_string(scales[i]) + " outside [1, g]");
    if (i) check(scales[i] > scales[i - 1], ErrorKind::InvalidConfig,
                 "difference layer: scales must be strictly increasing");
  }
  check(reduction >= 1 && d % reduction == 0, ErrorKind::InvalidConfig,
        "difference layer: channels must be divisible by the reduction ratio");

  DiffLayerParams<T> p;
  p.g = g;
  p.reduction = reduction;
  p.d = d;
  p.dr = d / reduction;
  p.former = ad::make_conv2d(ps, name + ".former", p.dr, d, 1, 1, 0, rng);
  p.latter_w = ps.add(name + ".latter.w", {p.dr, 3, 3});
  p.latter_b = ps.add(name + ".latter.b", {p.dr});
  ad::init_uniform_fanin(p.latter_w, 9, rng);

  for (int s : scales) {
    ScaleAggParams<T> a;
    a.style = style;
    a.spec.stride = s;
    a.spec.t_len = g / s;
    const std::string base = name + ".agg_s" + std::to_string(s);
    switch (style) {
      case AggStyle::dwconv3d: {
        a.dw1_w = ps.add(base + ".dw1.w", {p.dr, 3, 3, 3});
        a.dw1_b = ps.add(base + ".dw1.b", {p.dr});
        a.pw1_w = ps.add(base + ".pw1.w", {p.dr, p.dr});
        a.pw1_b = ps.add(base + ".pw1.b", {p.dr});
        a.dw2_w = ps.add(base + ".dw2.w", {p.dr, a.spec.t_len, 3, 3});
        a.dw2_b = ps.add(base + ".dw2.b", {p.dr});
        a.pw2_w = ps.add(base + ".pw2.w", {p.d, p.dr});
        a.pw2_b = ps.add(base + ".pw2.b", {p.d});
        ad::init_uniform_fanin(a.dw1_w, 27, rng);
        ad::init_uniform_fanin(a.pw1_w, p.dr, rng);
        ad::init_uniform_fanin(a.dw2_w, a.spec.t_len * 9, rng);
        ad::init_uniform_fanin(a.pw2_w, p.dr, rng);
        break;
      }
      case AggStyle::add:
        a.conv = ad::make_conv2d(ps, base + ".conv", p.d, p.dr, 3, 1, 1, rng);
        break;
      case AggStyle::concat:
        a.conv = ad::make_conv2d(ps, base + ".conv", p.d, a.spec.t_len * p.dr, 3, 1, 1, rng);
        break;
      case AggStyle::gru:
        a.gru = ad::make_gru(ps, base + ".gru", p.d, p.dr, rng);
        break;
    }
    p.scales.push_back(std::move(a));
  }

  const int64_t ns = static_cast<int64_t>(scales.size());
  p.fc1_w = ps.add(name + ".attn.fc1.w", {ns, ns});
  p.fc1_b = ps.add(name + ".attn.fc1.b", {ns});
  p.fc2_w = ps.add(name + ".attn.fc2.w", {ns, ns});
  p.fc2_b = ps.add(name + ".attn.fc2.b", {ns});
  ad::init_uniform_fanin(p.fc1_w, ns, rng);
  ad::init_uniform_fanin(p.fc2_w, ns, rng);
  p.proj = ad::make_conv2d(ps, name + ".proj", p.d, p.d, 1, 1, 0, rng);
  return p;
}

// Channel reduction shared across windows, then a shared depthwise 3x3 that
// smooths spatial boundaries; the pairs (former, latter) feed the differences.
template <typename T>
std::pair<ad::Tensor<T>, ad::Tensor<T>> former_latter(ad::Tape<T>* tape, const ad::Tensor<T>& warped,
                                                      const DiffLayerParams<T>& p) {
  check(warped.rank() == 4 && warped.dim(1) == p.d, ErrorKind::ShapeError,
        "former_latter: (g+1,d,h,w) warped features required");
  auto former = p.former(tape, warped);  // (g+1, d/r, h, w)
  auto latter = ad::dwconv2d(tape, former, p.latter_w, p.latter_b, 1);
  return {former, latter};
}

// D_j = latter[(j+1)*s] - former[j*s], stacked along a temporal axis of
// length floor(g/s). Output (1, d/r, T_s, h, w).
template <typename T>
ad::Tensor<T> temporal_differences(ad::Tape<T>* tape, const ad::Tensor<T>& formers,
                                   const ad::Tensor<T>& latters, int stride, int g) {
  check(stride >= 1 && stride <= g, ErrorKind::InvalidConfig,
        "temporal_differences: stride outside [1, g]");
  check(formers.shape() == latters.shape() && formers.rank() == 4 && formers.dim(0) == g + 1,
        ErrorKind::ShapeError, "temporal_differences: former/latter shapes must be (g+1,c,h,w)");
  const int64_t c = formers.dim(1), h = formers.dim(2), w = formers.dim(3);
  const int count = g / stride;
  std::vector<ad::Tensor<T>> maps;
  maps.reserve(static_cast<size_t>(count));
  for (int j = 0; j < count; ++j) {
    auto d = ad::sub(tape, ad::slice0(tape, latters, (j + 1) * stride),
                     ad::slice0(tape, formers, j * stride));
    maps.push_back(ad::reshape(tape, d, {int64_t(1), c, int64_t(1), h, w}));
  }
  return ad::concat(tape, maps, 2);
}

// Collapses the temporal axis of one scale's difference stack into a
// (1, d, h, w) motion map.
template <typename T>
ad::Tensor<T> aggregate_scale(ad::Tape<T>* tape, const ad::Tensor<T>& stack,
                              const ScaleAggParams<T>& a, const DiffLayerParams<T>& p) {
  check(stack.rank() == 5 && stack.dim(1) == p.dr && stack.dim(2) == a.spec.t_len,
        ErrorKind::ShapeError, "aggregate_scale: stack must be (1, d/r, T_s, h, w)");
  const int64_t h = stack.dim(3), w = stack.dim(4);
  switch (a.style) {
    case AggStyle::dwconv3d: {
      // (3,3,3) depthwise keeps T; the second depthwise spans the remaining
      // temporal extent with no temporal padding, collapsing T to 1
      auto x = ad::dwsep_conv3d(tape, stack, a.dw1_w, a.dw1_b, a.pw1_w, a.pw1_b, 1, 1, 1);
      x = ad::relu(tape, x);
      x = ad::dwsep_conv3d(tape, x, a.dw2_w, a.dw2_b, a.pw2_w, a.pw2_b, 0, 1, 1);
      return ad::reshape(tape, x, {int64_t(1), p.d, h, w});
    }
    case AggStyle::add: {
      // temporal slices live on axis 1 of (d/r, T, h, w)
      auto seq = ad::reshape(tape, stack, {p.dr, a.spec.t_len, h, w});
      auto acc = ad::reshape(tape, ad::slice_ch(tape, seq, 0, 1), {int64_t(1), p.dr, h, w});
      for (int64_t j = 1; j < a.spec.t_len; ++j) {
        auto sj = ad::reshape(tape, ad::slice_ch(tape, seq, j, j + 1), {int64_t(1), p.dr, h, w});
        acc = ad::add(tape, acc, sj);
      }
      return a.conv(tape, acc);
    }
    case AggStyle::concat: {
      // (1, d/r, T, h, w) -> (1, T*d/r, h, w); channel order (c, t)
      auto flat = ad::reshape(tape, stack, {int64_t(1), p.dr * a.spec.t_len, h, w});
      return a.conv(tape, flat);
    }
    case AggStyle::gru: {
      auto seq = ad::reshape(tape, stack, {p.dr, a.spec.t_len, h, w});
      auto hstate = ad::Tensor<T>::zeros({1, p.d, h, w});
      for (int64_t j = 0; j < a.spec.t_len; ++j) {
        auto sj = ad::reshape(tape, ad::slice_ch(tape, seq, j, j + 1), {int64_t(1), p.dr, h, w});
        hstate = ad::gru_cell(tape, hstate, sj, a.gru);
      }
      return hstate;
    }
  }
  fail(ErrorKind::InvalidConfig, "aggregate_scale: unknown style");
}

template <typename T>
struct FuseResult {
  ad::Tensor<T> pre;      // weighted sum before the channel projection
  ad::Tensor<T> out;      // difference motion feature F_D
  ad::Tensor<T> weights;  // per-scale softmax weights, shape (S)
};

// Scale attention: each scale pools to one scalar over (C,H,W); two fully
// connected layers and a softmax over the scale axis produce the mixing
// weights; a 1x1 convolution adjusts the channels of the weighted sum.
template <typename T>
FuseResult<T> fuse_scales(ad::Tape<T>* tape, const std::vector<ad::Tensor<T>>& per_scale,
                          const DiffLayerParams<T>& p) {
  check(!per_scale.empty(), ErrorKind::InvalidConfig, "fuse_scales: no scales");
  const int64_t ns = static_cast<int64_t>(per_scale.size());
  std::vector<ad::Tensor<T>> pooled;
  pooled.reserve(per_scale.size());
  for (const auto& d : per_scale) pooled.push_back(ad::mean_all(tape, d));
  auto z = ad::reshape(tape, ad::concat(tape, pooled, 0), {int64_t(1), ns});
  auto hid = ad::relu(tape, ad::linear(tape, z, p.fc1_w, p.fc1_b));
  auto logits = ad::linear(tape, hid, p.fc2_w, p.fc2_b);
  auto wts = ad::reshape(tape, ad::softmax(tape, logits, 1), {ns});

  ad::Tensor<T> fused = ad::mul_scalar_t(tape, per_scale[0], wts, 0);
  for (int64_t s = 1; s < ns; ++s)
    fused = ad::add(tape, fused, ad::mul_scalar_t(tape, per_scale[static_cast<size_t>(s)], wts, s));

  FuseResult<T> r;
  r.pre = fused;
  r.out = p.proj(tape, fused);
  r.weights = wts;
  return r;
}

// full difference branch: warp, reduce/transform, difference at every stride,
// aggregate per scale, fuse
template <typename T>
FuseResult<T> difference_features(ad::Tape<T>* tape, const ad::Tensor<T>& features,
                                  const ad::Tensor<T>& flow, const DiffLayerParams<T>& p) {
  auto warped = warp_all(tape, features, flow);
  auto [formers, latters] = former_latter(tape, warped, p);
  std::vector<ad::Tensor<T>> per_scale;
  per_scale.reserve(p.scales.size());
  for (const auto& a : p.scales) {
    auto stack = temporal_differences(tape, formers, latters, a.spec.stride, p.g);
    per_scale.push_back(aggregate_scale(tape, stack, a, p));
  }
  return fuse_scales(tape, per_scale, p);
}

}  // namespace edcflow::diff
