#pragma once

#include "edcflow/nn.hpp"

namespace edcflow::corr {

// All-pairs dot products between reference and target features at 1/8
// resolution, scaled by 1/sqrt(dbar), viewed as one plane per reference pixel
// plus 2x average-pooled levels over the target dimensions.
template <typename T>
struct CostVolume {
  std::vector<ad::Tensor<T>> levels;  // level k: (H8*W8, 1, H8/2^k, W8/2^k)
  int64_t h8 = 0, w8 = 0;
};

template <typename T>
CostVolume<T> build_cost_volume(ad::Tape<T>* tape, const ad::Tensor<T>& ref_feat,
                                const ad::Tensor<T>& tgt_feat, int num_levels) {
  check(ref_feat.rank() == 3 && tgt_feat.rank() == 3, ErrorKind::ShapeError,
        "build_cost_volume: (dbar,H8,W8) features required");
  check(ref_feat.shape() == tgt_feat.shape(), ErrorKind::ShapeError,
        "build_cost_volume: feature shapes differ");
  check(num_levels >= 1, ErrorKind::InvalidConfig, "build_cost_volume: need at least one level");
  const int64_t dbar = ref_feat.dim(0), h8 = ref_feat.dim(1), w8 = ref_feat.dim(2);
  const int64_t np = h8 * w8;

  auto ref_pc = ad::transpose2d(tape, ad::reshape(tape, ref_feat, {dbar, np}));  // (np, dbar)
  auto tgt_pc = ad::transpose2d(tape, ad::reshape(tape, tgt_feat, {dbar, np}));
  auto vol = ad::matmul_nt(tape, ref_pc, tgt_pc);  // (np, np)
  vol = ad::affine(tape, vol, static_cast<T>(1.0 / std::sqrt(static_cast<double>(dbar))), T(0));

  CostVolume<T> cv;
  cv.h8 = h8;
  cv.w8 = w8;
  cv.levels.push_back(ad::reshape(tape, vol, {np, int64_t(1), h8, w8}));
  for (int l = 1; l < num_levels; ++l)
    cv.levels.push_back(ad::avg_pool2d(tape, cv.levels.back()));
  return cv;
}

// flow-conditioned retrieval; see corr_lookup for the sampling contract
template <typename T>
ad::Tensor<T> lookup(ad::Tape<T>* tape, const CostVolume<T>& vol, const ad::Tensor<T>& flow8,
                     int64_t radius) {
  check(flow8.rank() == 3 && flow8.dim(0) == 2 && flow8.dim(1) == vol.h8 && flow8.dim(2) == vol.w8,
        ErrorKind::ShapeError, "lookup: flow must be (2,H8,W8) at volume resolution");
  return ad::corr_lookup(tape, vol.levels, flow8, radius);
}

template <typename T>
struct CorrEncoderParams {
  ad::Conv2dLayer<T> c1, c2;
};

template <typename T>
CorrEncoderParams<T> make_corr_encoder(ad::ParamStore<T>& ps, const std::string& name, int64_t in_ch,
                                       int64_t mid_ch, int64_t out_ch, Rng& rng) {
  CorrEncoderParams<T> p;
  p.c1 = ad::make_conv2d(ps, name + ".c1", mid_ch, in_ch, 3, 1, 1, rng);
  p.c2 = ad::make_conv2d(ps, name + ".c2", out_ch, mid_ch, 3, 1, 1, rng);
  return p;
}

// Correlation motion features at the update resolution. With a quarter-level
// flow the field is pooled to 1/8 with halved values for the lookup and the
// correlation map is bilinearly upsampled back before encoding.
template <typename T>
ad::Tensor<T> encode_correlation(ad::Tape<T>* tape, const CostVolume<T>& vol,
                                 const ad::Tensor<T>& flow, bool flow_is_quarter, int64_t radius,
                                 const CorrEncoderParams<T>& p) {
  check(flow.rank() == 4 && flow.dim(0) == 1 && flow.dim(1) == 2, ErrorKind::ShapeError,
        "encode_correlation: flow must be (1,2,h,w)");
  ad::Tensor<T> corr_map;
  if (flow_is_quarter) {
    auto pooled = ad::avg_pool2d(tape, flow);                      // (1,2,H8,W8)
    auto halved = ad::affine(tape, pooled, T(0.5), T(0));          // displacement in 1/8 pixels
    auto flow8 = ad::reshape(tape, halved, {int64_t(2), vol.h8, vol.w8});
    auto taps = lookup(tape, vol, flow8, radius);
    auto taps4 = ad::reshape(tape, taps, {int64_t(1), taps.dim(0), vol.h8, vol.w8});
    corr_map = ad::upsample2x(tape, taps4);
  } else {
    auto flow8 = ad::reshape(tape, flow, {int64_t(2), vol.h8, vol.w8});
    auto taps = lookup(tape, vol, flow8, radius);
    corr_map = ad::reshape(tape, taps, {int64_t(1), taps.dim(0), vol.h8, vol.w8});
  }
  auto x = ad::relu(tape, p.c1(tape, corr_map));
  return ad::relu(tape, p.c2(tape, x));
}

}  // namespace edcflow::corr
