#pragma once

#include <json.hpp>

#include "edcflow/correlation.hpp"
#include "edcflow/diffmotion.hpp"
#include "edcflow/encoders.hpp"

namespace edcflow {

enum class UpdateRes { quarter = 4, eighth = 8 };

struct ModelConfig {
  int g = 5;
  int bins = 3;
  int d = 64;      // quarter-level feature channels
  int dbar = 96;   // eighth-level feature channels
  int stem_ch = 0; // half-resolution trunk width; 0 means d/2
  int hidden = 96;
  int ctx = 64;
  int corr_levels = 2;
  int corr_radius = 4;
  int corr_mid = 96;
  int corr_dim = 64;
  std::vector<int> scales{1, 2, 5};
  int reduction = 1;
  int iters = 6;
  diff::AggStyle agg = diff::AggStyle::dwconv3d;
  UpdateRes res = UpdateRes::quarter;
  bool use_diff = true;
  bool use_corr = true;
  int se_reduction = 8;
  int flow_head_dim = 0;  // 0 means hidden
  int mask_mid = 64;

  int half_channels() const { return stem_ch > 0 ? stem_ch : d / 2; }
  int update_channels() const { return res == UpdateRes::quarter ? d : dbar; }
  int upsample_factor() const { return res == UpdateRes::quarter ? 4 : 8; }
  int motion_channels() const {
    return (use_diff ? update_channels() : 0) + (use_corr ? corr_dim : 0);
  }
  int flow_head() const { return flow_head_dim > 0 ? flow_head_dim : hidden; }

  void validate() const {
    check(g >= 1, ErrorKind::InvalidConfig, "config: g must be >= 1");
    check(bins >= 1, ErrorKind::InvalidConfig, "config: bins must be >= 1");
    check(d >= 2 && dbar >= 2 && hidden >= 2 && ctx >= 1, ErrorKind::InvalidConfig,
          "config: channel widths too small");
    check(iters >= 1, ErrorKind::InvalidConfig, "config: iters must be >= 1");
    check(corr_levels >= 1 && corr_radius >= 0, ErrorKind::InvalidConfig,
          "config: bad correlation settings");
    check(use_diff || use_corr, ErrorKind::InvalidConfig,
          "config: at least one motion branch must be enabled");
    check(!use_diff || (update_channels() % reduction == 0), ErrorKind::InvalidConfig,
          "config: channels not divisible by reduction");
    check(motion_channels() % se_reduction == 0, ErrorKind::InvalidConfig,
          "config: fused channels not divisible by attention reduction");
    if (use_diff) {
      check(!scales.empty(), ErrorKind::InvalidConfig, "config: empty scale set");
      for (int s : scales)
        check(s >= 1 && s <= g, ErrorKind::InvalidConfig, "config: scale outside [1, g]");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"g", c.g}, {"bins", c.bins}, {"d", c.d}, {"dbar", c.dbar},
                     {"stem_ch", c.stem_ch}, {"hidden", c.hidden}, {"ctx", c.ctx},
                     {"corr_levels", c.corr_levels}, {"corr_radius", c.corr_radius},
                     {"corr_mid", c.corr_mid}, {"corr_dim", c.corr_dim}, {"scales", c.scales},
                     {"reduction", c.reduction}, {"iters", c.iters},
                     {"agg", diff::agg_style_name(c.agg)},
                     {"res", c.res == UpdateRes::quarter ? 4 : 8},
                     {"use_diff", c.use_diff}, {"use_corr", c.use_corr},
                     {"se_reduction", c.se_reduction}, {"flow_head_dim", c.flow_head_dim},
                     {"mask_mid", c.mask_mid}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("g").get_to(c.g);
  j.at("bins").get_to(c.bins);
  j.at("d").get_to(c.d);
  j.at("dbar").get_to(c.dbar);
  j.at("stem_ch").get_to(c.stem_ch);
  j.at("hidden").get_to(c.hidden);
  j.at("ctx").get_to(c.ctx);
  j.at("corr_levels").get_to(c.corr_levels);
  j.at("corr_radius").get_to(c.corr_radius);
  j.at("corr_mid").get_to(c.corr_mid);
  j.at("corr_dim").get_to(c.corr_dim);
  j.at("scales").get_to(c.scales);
  j.at("reduction").get_to(c.reduction);
  j.at("iters").get_to(c.iters);
  c.agg = diff::agg_style_from(j.at("agg").get<std::string>());
  c.res = j.at("res").get<int>() == 8 ? UpdateRes::eighth : UpdateRes::quarter;
  j.at("use_diff").get_to(c.use_diff);
  j.at("use_corr").get_to(c.use_corr);
  j.at("se_reduction").get_to(c.se_reduction);
  j.at("flow_head_dim").get_to(c.flow_head_dim);
  j.at("mask_mid").get_to(c.mask_mid);
}

// adaptive fusion of the two motion branches by channel attention
template <typename T>
ad::Tensor<T> fuse_motion(ad::Tape<T>* tape, const ad::Tensor<T>* f_d, const ad::Tensor<T>* f_c,
                          const ad::SeParams<T>& se) {
  check(f_d != nullptr || f_c != nullptr, ErrorKind::InvalidConfig, "fuse_motion: no motion features");
  ad::Tensor<T> cat;
  if (f_d && f_c) {
    check(f_d->rank() == 4 && f_c->rank() == 4 && f_d->dim(2) == f_c->dim(2) &&
              f_d->dim(3) == f_c->dim(3),
          ErrorKind::ShapeError, "fuse_motion: branches not spatially aligned");
    cat = ad::concat(tape, {*f_d, *f_c}, 1);
  } else {
    cat = f_d ? *f_d : *f_c;
  }
  return ad::channel_attention(tape, cat, se);
}

// one GRU step: hidden' from (motion, flow, context), then a residual flow
// from the two-convolution flow head; f_k = f_{k-1} + df
template <typename T>
struct GruUpdateResult {
  ad::Tensor<T> hidden;
  ad::Tensor<T> flow;
  ad::Tensor<T> delta;
};

template <typename T>
GruUpdateResult<T> gru_update(ad::Tape<T>* tape, const ad::Tensor<T>& hidden,
                              const ad::Tensor<T>& context, const ad::Tensor<T>& motion,
                              const ad::Tensor<T>& flow, const ad::GruParams<T>& gru,
                              const ad::Conv2dLayer<T>& fh1, const ad::Conv2dLayer<T>& fh2) {
  auto inp = ad::concat(tape, {motion, flow, context}, 1);
  auto h2 = ad::gru_cell(tape, hidden, inp, gru);
  auto delta = fh2(tape, ad::relu(tape, fh1(tape, h2)));
  auto f2 = ad::add(tape, flow, delta);
  return {h2, f2, delta};
}

// learned convex upsampling of the update-resolution flow to full resolution
template <typename T>
ad::Tensor<T> upsample_flow(ad::Tape<T>* tape, const ad::Tensor<T>& flow, const ad::Tensor<T>& hidden,
                            const ad::Conv2dLayer<T>& mh1, const ad::Conv2dLayer<T>& mh2,
                            int64_t factor) {
  auto logits = mh2(tape, ad::relu(tape, mh1(tape, hidden)));
  const int64_t h = flow.dim(2), w = flow.dim(3);
  auto m = ad::reshape(tape, logits, {factor * factor, int64_t(9), h, w});
  auto wts = ad::softmax(tape, m, 1);
  auto flow3 = ad::reshape(tape, flow, {int64_t(2), h, w});
  auto up = ad::convex_combine(tape, flow3, wts, factor);
  return ad::reshape(tape, up, {int64_t(1), int64_t(2), h * factor, w * factor});
}

template <typename T>
struct IterationTrace {
  std::vector<ad::Tensor<T>> update_flows;  // (1,2,hu,wu), one per iteration
  std::vector<ad::Tensor<T>> full_flows;    // (1,2,H,W), one per iteration
  const ad::Tensor<T>& final_flow() const { return full_flows.back(); }
};

template <typename T>
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const int64_t half = cfg_.half_channels();
    fnet_ = enc::make_feature_encoder(ps_, "fnet", cfg_.bins, half, cfg_.d, cfg_.dbar, rng);
    cnet_ = enc::make_context_encoder(ps_, "cnet", cfg_.bins, half, cfg_.hidden, cfg_.ctx, rng);
    if (cfg_.use_corr) {
      const int64_t taps = (2 * cfg_.corr_radius + 1) * (2 * cfg_.corr_radius + 1);
      cenc_ = corr::make_corr_encoder(ps_, "cenc", cfg_.corr_levels * taps, cfg_.corr_mid,
                                      cfg_.corr_dim, rng);
    }
    if (cfg_.use_diff)
      dlayer_ = diff::make_diff_layer(ps_, "diff", cfg_.g, cfg_.update_channels(), cfg_.reduction,
                                      cfg_.scales, cfg_.agg, rng);
    se_ = ad::make_se(ps_, "fuse", cfg_.motion_channels(), cfg_.se_reduction, rng);
    const int64_t gin = cfg_.motion_channels() + 2 + cfg_.ctx;
    gru_ = ad::make_gru(ps_, "gru", cfg_.hidden, gin, rng);
    fh1_ = ad::make_conv2d(ps_, "flow_head.c1", cfg_.flow_head(), cfg_.hidden, 3, 1, 1, rng);
    fh2_ = ad::make_conv2d(ps_, "flow_head.c2", 2, cfg_.flow_head(), 3, 1, 1, rng);
    const int64_t f = cfg_.upsample_factor();
    mh1_ = ad::make_conv2d(ps_, "mask_head.c1", cfg_.mask_mid, cfg_.hidden, 3, 1, 1, rng);
    mh2_ = ad::make_conv2d(ps_, "mask_head.c2", 9 * f * f, cfg_.mask_mid, 1, 1, 0, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore<T>& params() { return ps_; }
  const ad::ParamStore<T>& params() const { return ps_; }

  IterationTrace<T> run_iterations(ad::Tape<T>* tape, const WindowSet& windows, int iters = 0,
                                   const ad::Tensor<T>* init_flow = nullptr) const {
    check(static_cast<int>(windows.grids.size()) == cfg_.g + 1, ErrorKind::InvalidConfig,
          "run_iterations: window count does not match g");
    return run_iterations(tape, windows_to_tensor<T>(windows), iters, init_flow);
  }

  // K refinement iterations from a zero (or given) initial flow. The flow is
  // detached wherever it enters sampling coordinates or the GRU input, so
  // gradients reach earlier iterations only through the hidden state and the
  // shared features.
  IterationTrace<T> run_iterations(ad::Tape<T>* tape, const ad::Tensor<T>& wt, int iters = 0,
                                   const ad::Tensor<T>* init_flow = nullptr) const {
    const int K = iters > 0 ? iters : cfg_.iters;
    check(wt.rank() == 4 && wt.dim(0) == cfg_.g + 1 && wt.dim(1) == cfg_.bins,
          ErrorKind::InvalidConfig, "run_iterations: window tensor does not match g and bins");
    auto pyr = enc::encode_features(tape, wt, fnet_);
    auto ref = ad::reshape(tape, ad::slice0(tape, wt, 0),
                           {int64_t(1), wt.dim(1), wt.dim(2), wt.dim(3)});
    auto ctx = enc::encode_context(tape, ref, cnet_);

    const bool quarter = cfg_.res == UpdateRes::quarter;
    const auto& feats = quarter ? pyr.quarter : pyr.eighth;
    const int64_t hu = feats.dim(2), wu = feats.dim(3);

    corr::CostVolume<T> vol;
    if (cfg_.use_corr) {
      const int gidx = cfg_.g;
      vol = corr::build_cost_volume(tape, ad::slice0(tape, pyr.eighth, 0),
                                    ad::slice0(tape, pyr.eighth, gidx), cfg_.corr_levels);
    }

    // context at the update resolution
    auto context = ctx.context;
    auto hidden = ctx.hidden_init;
    if (!quarter) {
      context = ad::avg_pool2d(tape, context);
      hidden = ad::avg_pool2d(tape, hidden);
    }

    ad::Tensor<T> flow;
    if (init_flow) {
      check(init_flow->rank() == 4 && init_flow->dim(1) == 2 && init_flow->dim(2) == hu &&
                init_flow->dim(3) == wu,
            ErrorKind::ShapeError, "run_iterations: bad initial flow shape");
      flow = init_flow->detach();
    } else {
      flow = ad::Tensor<T>::zeros({1, 2, hu, wu});
    }

    IterationTrace<T> trace;
    trace.update_flows.reserve(static_cast<size_t>(K));
    trace.full_flows.reserve(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
      auto flow_c = flow.detach();  // constant for coordinates and GRU input

      const ad::Tensor<T>* fd_ptr = nullptr;
      const ad::Tensor<T>* fc_ptr = nullptr;
      ad::Tensor<T> f_d, f_c;
      if (cfg_.use_corr) {
        f_c = corr::encode_correlation(tape, vol, flow_c, quarter, cfg_.corr_radius, cenc_);
        fc_ptr = &f_c;
      }
      if (cfg_.use_diff) {
        f_d = diff::difference_features(tape, feats, flow_c, dlayer_).out;
        fd_ptr = &f_d;
      }
      auto motion = fuse_motion(tape, fd_ptr, fc_ptr, se_);
      auto upd = gru_update(tape, hidden, context, motion, flow_c, gru_, fh1_, fh2_);
      hidden = upd.hidden;
      flow = upd.flow;
      trace.update_flows.push_back(flow);
      trace.full_flows.push_back(
          upsample_flow(tape, flow, hidden, mh1_, mh2_, cfg_.upsample_factor()));
    }
    return trace;
  }

 private:
  ModelConfig cfg_;
  ad::ParamStore<T> ps_;
  enc::FeatureEncoderParams<T> fnet_;
  enc::ContextEncoderParams<T> cnet_;
  corr::CorrEncoderParams<T> cenc_;
  diff::DiffLayerParams<T> dlayer_;
  ad::SeParams<T> se_;
  ad::GruParams<T> gru_;
  ad::Conv2dLayer<T> fh1_, fh2_;
  ad::Conv2dLayer<T> mh1_, mh2_;
};

}  // namespace edcflow
