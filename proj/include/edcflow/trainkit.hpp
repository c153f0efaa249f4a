#pragma once

#include <ostream>

#include <json.hpp>

#include "edcflow/objective.hpp"
#include "edcflow/synth.hpp"
#include "edcflow/updater.hpp"

namespace edcflow {

struct TrainConfig {
  double max_lr = 2e-4;
  int64_t total_steps = 2000;
  int batch = 3;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  uint64_t seed = 0;
  double pct_start = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int crop = 0;  // 0 disables cropping
  double hflip_p = 0.5;
  double vflip_p = 0.1;
  int64_t log_interval = 25;
  int64_t val_interval = 250;
};

// One-cycle schedule: linear warmup from max_lr/25 over pct_start*total steps,
// then cosine anneal from max_lr down to max_lr/1e4.
inline double one_cycle_lr(int64_t step, int64_t total, double max_lr, double pct_start) {
  check(total >= 1 && step >= 0 && step <= total, ErrorKind::InvalidConfig, "one_cycle_lr: bad step");
  const double start_lr = max_lr / 25.0;
  const double end_lr = max_lr / 1e4;
  const auto warm = static_cast<int64_t>(std::llround(pct_start * static_cast<double>(total)));
  if (step <= warm) {
    if (warm == 0) return max_lr;
    return start_lr + (max_lr - start_lr) * static_cast<double>(step) / static_cast<double>(warm);
  }
  const double tau = static_cast<double>(step - warm) / static_cast<double>(total - warm);
  return end_lr + (max_lr - end_lr) * 0.5 * (1.0 + std::cos(M_PI * tau));
}

// Adaptive moments with decoupled weight decay. State is indexed by the
// parameter order in the store.
template <typename T>
class AdamW {
 public:
  explicit AdamW(const ad::ParamStore<T>& params, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, t] : params.entries()) {
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }

  int64_t steps_taken() const { return t_; }

  // aborts (throws GradError) on non-finite gradients, leaving parameters
  // untouched
  void step(ad::ParamStore<T>& params, double lr, double weight_decay) {
    auto& entries = params.entries();
    check(entries.size() == m_.size(), ErrorKind::InvalidConfig, "optimizer/parameter mismatch");
    for (auto& [name, p] : entries) {
      auto g = p.grad();
      const double n2 = static_cast<double>(kern::sumsq(g.data(), g.size()));
      check(std::isfinite(n2), ErrorKind::GradError, "non-finite gradient in " + name);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < entries.size(); ++i) {
      auto p = entries[i].second.data();
      auto g = entries[i].second.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < p.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        double x = static_cast<double>(p[j]);
        x -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay * x);
        p[j] = static_cast<T>(x);
      }
    }
  }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales all gradients so the global L2 norm is at most max_norm; returns the
// pre-clip norm.
template <typename T>
double clip_grad_norm(ad::ParamStore<T>& params, double max_norm) {
  double n2 = 0.0;
  for (auto& [name, p] : params.entries()) {
    auto g = p.grad();
    n2 += static_cast<double>(kern::sumsq(g.data(), g.size()));
  }
  const double norm = std::sqrt(n2);
  if (std::isfinite(norm) && norm > max_norm && norm > 0) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& [name, p] : params.entries()) {
      auto g = p.grad();
      kern::scale(s, g.data(), g.size());
    }
  }
  return norm;
}

namespace detail {

// deterministic per-draw augmentation; the rng order is sample, hflip, vflip,
// crop x, crop y
template <typename T>
struct DrawnSample {
  ad::Tensor<T> windows;
  ad::Tensor<T> gt;
  ad::Tensor<T> mask;
};

template <typename T>
DrawnSample<T> draw_sample(const synth::Sample& s, int g, int bins, const TrainConfig& cfg, Rng& rng,
                           bool augment) {
  WindowSet w = synth::to_windows(s, g, bins);
  FlowImage gt = s.gt;
  std::vector<uint8_t> mask = s.valid;
  const int width = w.grids.front().width, height = w.grids.front().height;

  auto hflip_gt = [&]() {
    for (uint32_t y = 0; y < gt.height; ++y)
      for (uint32_t x = 0; x < gt.width / 2; ++x) {
        const uint32_t x2 = gt.width - 1 - x;
        std::swap(gt.u(x, y), gt.u(x2, y));
        std::swap(gt.v(x, y), gt.v(x2, y));
        std::swap(mask[y * gt.width + x], mask[y * gt.width + x2]);
      }
    for (uint32_t y = 0; y < gt.height; ++y)
      for (uint32_t x = 0; x < gt.width; ++x) gt.u(x, y) = -gt.u(x, y);
  };
  auto vflip_gt = [&]() {
    for (uint32_t y = 0; y < gt.height / 2; ++y)
      for (uint32_t x = 0; x < gt.width; ++x) {
        const uint32_t y2 = gt.height - 1 - y;
        std::swap(gt.u(x, y), gt.u(x, y2));
        std::swap(gt.v(x, y), gt.v(x, y2));
        std::swap(mask[y * gt.width + x], mask[y2 * gt.width + x]);
      }
    for (uint32_t y = 0; y < gt.height; ++y)
      for (uint32_t x = 0; x < gt.width; ++x) gt.v(x, y) = -gt.v(x, y);
  };

  if (augment) {
    if (rng.uniform() < cfg.hflip_p) {
      flip_horizontal(w);
      hflip_gt();
    }
    if (rng.uniform() < cfg.vflip_p) {
      flip_vertical(w);
      vflip_gt();
    }
    if (cfg.crop > 0 && (cfg.crop < width || cfg.crop < height)) {
      // origins stay multiples of 8 so the pyramid strides divide evenly
      const int max_x = (width - cfg.crop) / 8, max_y = (height - cfg.crop) / 8;
      const int x0 = 8 * static_cast<int>(rng.uniform_int(max_x + 1));
      const int y0 = 8 * static_cast<int>(rng.uniform_int(max_y + 1));
      w = crop(w, x0, y0, cfg.crop, cfg.crop);
      FlowImage gtc = FlowImage::zeros(static_cast<uint32_t>(cfg.crop), static_cast<uint32_t>(cfg.crop));
      std::vector<uint8_t> mc(static_cast<size_t>(cfg.crop) * cfg.crop);
      for (int y = 0; y < cfg.crop; ++y)
        for (int x = 0; x < cfg.crop; ++x) {
          gtc.u(x, y) = gt.u(x0 + x, y0 + y);
          gtc.v(x, y) = gt.v(x0 + x, y0 + y);
          mc[static_cast<size_t>(y) * cfg.crop + x] =
              mask[static_cast<size_t>(y0 + y) * gt.width + (x0 + x)];
        }
      gt = std::move(gtc);
      mask = std::move(mc);
    }
  }

  DrawnSample<T> out;
  out.windows = windows_to_tensor<T>(w);
  out.gt = flow_to_tensor<T>(gt);
  out.mask = mask_to_tensor<T>(mask, gt.height, gt.width);
  return out;
}

}  // namespace detail

// mean endpoint error of the final full-resolution flow over a sample list
template <typename T>
double validation_epe(const Model<T>& model, const std::vector<synth::Sample>& samples, int iters = 0) {
  check(!samples.empty(), ErrorKind::InvalidConfig, "validation_epe: empty sample list");
  double acc = 0.0;
  for (const auto& s : samples) {
    auto w = synth::to_windows(s, model.config().g, model.config().bins);
    auto trace = model.run_iterations(nullptr, w, iters);
    acc += epe(tensor_to_flow(trace.final_flow()), s.gt, s.valid);
  }
  return acc / static_cast<double>(samples.size());
}

template <typename T>
struct FitResult {
  std::vector<std::string> log_lines;  // one JSON object per logged step
  double final_val_epe = -1.0;
  int64_t steps = 0;
};

// Training loop: sample a batch, run the refinement, apply the sequence loss,
// backpropagate, clip the global gradient norm, take an AdamW step on the
// one-cycle schedule. Aborts with Divergence if the loss leaves the reals.
template <typename T>
FitResult<T> fit(Model<T>& model, const std::vector<synth::Sample>& train,
                 const std::vector<synth::Sample>& val, const TrainConfig& cfg,
                 std::ostream* log_stream = nullptr) {
  check(!train.empty(), ErrorKind::InvalidConfig, "fit: empty training set");
  Rng rng(cfg.seed);
  AdamW<T> opt(model.params(), cfg.beta1, cfg.beta2, cfg.eps);
  FitResult<T> result;

  auto emit = [&](nlohmann::json j) {
    std::string line = j.dump();
    if (log_stream) (*log_stream) << line << '\n';
    result.log_lines.push_back(std::move(line));
  };

  const int g = model.config().g, bins = model.config().bins;
  for (int64_t step = 1; step <= cfg.total_steps; ++step) {
    const double lr = one_cycle_lr(step - 1, cfg.total_steps, cfg.max_lr, cfg.pct_start);
    model.params().zero_grads();
    double loss_sum = 0.0;
    const T seed_w = static_cast<T>(1.0 / static_cast<double>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
      const auto idx = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(train.size())));
      auto drawn = detail::draw_sample<T>(train[idx], g, bins, cfg, rng, true);
      ad::Tape<T> tape;
      auto trace = model.run_iterations(&tape, drawn.windows, 0);
      auto loss = sequence_loss(&tape, trace.full_flows, drawn.gt, drawn.mask);
      loss_sum += static_cast<double>(loss.item());
      tape.backward(loss, seed_w);
    }
    const double loss_mean = loss_sum / static_cast<double>(cfg.batch);
    if (!std::isfinite(loss_mean))
      fail(ErrorKind::Divergence, "fit: non-finite loss at step " + std::to_string(step));
    clip_grad_norm(model.params(), cfg.grad_clip);
    opt.step(model.params(), lr, cfg.weight_decay);

    const bool log_now = step % cfg.log_interval == 0 || step == cfg.total_steps || step == 1;
    const bool val_now = !val.empty() && (step % cfg.val_interval == 0 || step == cfg.total_steps);
    if (log_now || val_now) {
      nlohmann::json j{{"step", step}, {"lr", lr}, {"loss", loss_mean}};
      if (val_now) {
        result.final_val_epe = validation_epe(model, val);
        j["val_epe"] = result.final_val_epe;
      }
      emit(std::move(j));
    }
    result.steps = step;
  }
  if (!val.empty() && result.final_val_epe < 0) result.final_val_epe = validation_epe(model, val);
  return result;
}

}  // namespace edcflow
