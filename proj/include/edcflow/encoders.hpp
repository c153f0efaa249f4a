#pragma once

#include "edcflow/events.hpp"
#include "edcflow/nn.hpp"

namespace edcflow {

// (g+1, B, H, W) tensor from a window set
template <typename T>
ad::Tensor<T> windows_to_tensor(const WindowSet& w) {
  check(!w.grids.empty(), ErrorKind::InvalidConfig, "windows_to_tensor: empty window set");
  const auto& g0 = w.grids.front();
  for (const auto& g : w.grids)
    check(g.bins == g0.bins && g.height == g0.height && g.width == g0.width, ErrorKind::ShapeError,
          "windows_to_tensor: grids disagree on shape");
  auto t = ad::Tensor<T>::zeros(
      {static_cast<int64_t>(w.grids.size()), g0.bins, g0.height, g0.width});
  auto d = t.data();
  size_t off = 0;
  for (const auto& g : w.grids)
    for (double v : g.v) d[off++] = static_cast<T>(v);
  return t;
}

namespace enc {

template <typename T>
struct ResBlock {
  ad::Conv2dLayer<T> c1, c2;
};

template <typename T>
ResBlock<T> make_res_block(ad::ParamStore<T>& ps, const std::string& name, int64_t ch, Rng& rng) {
  ResBlock<T> b;
  b.c1 = ad::make_conv2d(ps, name + ".c1", ch, ch, 3, 1, 1, rng);
  b.c2 = ad::make_conv2d(ps, name + ".c2", ch, ch, 3, 1, 1, rng);
  return b;
}

template <typename T>
ad::Tensor<T> res_block(ad::Tape<T>* t, const ad::Tensor<T>& x, const ResBlock<T>& b) {
  auto y = b.c2(t, ad::relu(t, b.c1(t, x)));
  return ad::relu(t, ad::add(t, x, y));
}

// Shared trunk: stem (stride 2) -> two residual blocks at 1/2 -> stride-2
// transition -> two blocks at 1/4 (d channels) -> stride-2 transition -> two
// blocks at 1/8 (dbar channels). ReLU activations, no normalization.
template <typename T>
struct FeatureEncoderParams {
  ad::Conv2dLayer<T> stem;
  ResBlock<T> b1a, b1b;
  ad::Conv2dLayer<T> to_quarter;
  ResBlock<T> b2a, b2b;
  ad::Conv2dLayer<T> to_eighth;
  ResBlock<T> b3a, b3b;
};

template <typename T>
FeatureEncoderParams<T> make_feature_encoder(ad::ParamStore<T>& ps, const std::string& name,
                                             int64_t bins, int64_t half_ch, int64_t d, int64_t dbar,
                                             Rng& rng) {
  FeatureEncoderParams<T> p;
  p.stem = ad::make_conv2d(ps, name + ".stem", half_ch, bins, 3, 2, 1, rng);
  p.b1a = make_res_block(ps, name + ".b1a", half_ch, rng);
  p.b1b = make_res_block(ps, name + ".b1b", half_ch, rng);
  p.to_quarter = ad::make_conv2d(ps, name + ".to_quarter", d, half_ch, 3, 2, 1, rng);
  p.b2a = make_res_block(ps, name + ".b2a", d, rng);
  p.b2b = make_res_block(ps, name + ".b2b", d, rng);
  p.to_eighth = ad::make_conv2d(ps, name + ".to_eighth", dbar, d, 3, 2, 1, rng);
  p.b3a = make_res_block(ps, name + ".b3a", dbar, rng);
  p.b3b = make_res_block(ps, name + ".b3b", dbar, rng);
  return p;
}

template <typename T>
struct FeaturePyramid {
  ad::Tensor<T> quarter;  // (g+1, d, H/4, W/4)
  ad::Tensor<T> eighth;   // (g+1, dbar, H/8, W/8)
};

// All windows pass through the same parameters; the quarter level feeds the
// eighth level through one more stride-2 stage.
template <typename T>
FeaturePyramid<T> encode_features(ad::Tape<T>* tape, const ad::Tensor<T>& windows,
                                  const FeatureEncoderParams<T>& p) {
  check(windows.rank() == 4, ErrorKind::ShapeError, "encode_features: (g+1,B,H,W) tensor required");
  check(windows.dim(2) % 8 == 0 && windows.dim(3) % 8 == 0, ErrorKind::ShapeError,
        "encode_features: height and width must be divisible by 8");
  auto x = ad::relu(tape, p.stem(tape, windows));
  x = res_block(tape, x, p.b1a);
  x = res_block(tape, x, p.b1b);
  auto q = ad::relu(tape, p.to_quarter(tape, x));
  q = res_block(tape, q, p.b2a);
  q = res_block(tape, q, p.b2b);
  auto e = ad::relu(tape, p.to_eighth(tape, q));
  e = res_block(tape, e, p.b3a);
  e = res_block(tape, e, p.b3b);
  return {q, e};
}

// Context trunk with the same layout, stopping at 1/4; the quarter blocks run
// at hidden+ctx channels and the output splits into a tanh hidden state and a
// ReLU context map.
template <typename T>
struct ContextEncoderParams {
  ad::Conv2dLayer<T> stem;
  ResBlock<T> b1a, b1b;
  ad::Conv2dLayer<T> to_quarter;
  ResBlock<T> b2a, b2b;
  int64_t hidden = 0;
  int64_t ctx = 0;
};

template <typename T>
ContextEncoderParams<T> make_context_encoder(ad::ParamStore<T>& ps, const std::string& name,
                                             int64_t bins, int64_t half_ch, int64_t hidden,
                                             int64_t ctx, Rng& rng) {
  ContextEncoderParams<T> p;
  const int64_t out_ch = hidden + ctx;
  p.stem = ad::make_conv2d(ps, name + ".stem", half_ch, bins, 3, 2, 1, rng);
  p.b1a = make_res_block(ps, name + ".b1a", half_ch, rng);
  p.b1b = make_res_block(ps, name + ".b1b", half_ch, rng);
  p.to_quarter = ad::make_conv2d(ps, name + ".to_quarter", out_ch, half_ch, 3, 2, 1, rng);
  p.b2a = make_res_block(ps, name + ".b2a", out_ch, rng);
  p.b2b = make_res_block(ps, name + ".b2b", out_ch, rng);
  p.hidden = hidden;
  p.ctx = ctx;
  return p;
}

template <typename T>
struct ContextState {
  ad::Tensor<T> hidden_init;  // (1, hidden, H/4, W/4), tanh range
  ad::Tensor<T> context;      // (1, ctx, H/4, W/4), ReLU range
};

template <typename T>
ContextState<T> encode_context(ad::Tape<T>* tape, const ad::Tensor<T>& ref_grid,
                               const ContextEncoderParams<T>& p) {
  check(ref_grid.rank() == 4 && ref_grid.dim(0) == 1, ErrorKind::ShapeError,
        "encode_context: (1,B,H,W) tensor required");
  check(ref_grid.dim(2) % 8 == 0 && ref_grid.dim(3) % 8 == 0, ErrorKind::ShapeError,
        "encode_context: height and width must be divisible by 8");
  auto x = ad::relu(tape, p.stem(tape, ref_grid));
  x = res_block(tape, x, p.b1a);
  x = res_block(tape, x, p.b1b);
  auto q = ad::relu(tape, p.to_quarter(tape, x));
  q = res_block(tape, q, p.b2a);
  q = res_block(tape, q, p.b2b);
  ContextState<T> out;
  out.hidden_init = ad::tanh_op(tape, ad::slice_ch(tape, q, 0, p.hidden));
  out.context = ad::relu(tape, ad::slice_ch(tape, q, p.hidden, p.hidden + p.ctx));
  return out;
}

}  // namespace enc
}  // namespace edcflow
