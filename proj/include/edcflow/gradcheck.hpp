#pragma once

#include <functional>

#include "edcflow/ops.hpp"

namespace edcflow::ad {

struct FdReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int64_t checked = 0;
};

// Compares reverse-mode gradients against central finite differences of a
// random linear projection of the op output. `f` must be a pure function of
// `inputs`; gradients are checked for the indices in `wrt`.
// rel = |fd - ad| / max(1, |fd|, |ad|).
template <typename T>
FdReport finite_diff_check(const std::function<Tensor<T>(Tape<T>*, std::vector<Tensor<T>>&)>& f,
                           std::vector<Tensor<T>> inputs, const std::vector<int>& wrt, double eps,
                           Rng& rng) {
  for (int i : wrt) inputs[static_cast<size_t>(i)].set_requires_grad(true);

  Tensor<T> proj;
  auto project = [&](const Tensor<T>& out) {
    double s = 0.0;
    auto ov = out.data();
    auto pv = proj.data();
    for (size_t i = 0; i < ov.size(); ++i) s += static_cast<double>(ov[i]) * static_cast<double>(pv[i]);
    return s;
  };

  std::vector<std::vector<T>> ad_grads;
  {
    Tape<T> tape;
    auto out = f(&tape, inputs);
    proj = Tensor<T>::zeros(out.shape());
    for (auto& v : proj.data()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    auto loss = sum_all(&tape, mul(&tape, out, proj));
    tape.backward(loss);
    for (int i : wrt) {
      auto g = inputs[static_cast<size_t>(i)].grad();
      for (T v : g)
        check(std::isfinite(static_cast<double>(v)), ErrorKind::GradError, "non-finite gradient");
      ad_grads.emplace_back(g.begin(), g.end());
    }
  }

  FdReport rep;
  for (size_t k = 0; k < wrt.size(); ++k) {
    auto& x = inputs[static_cast<size_t>(wrt[k])];
    auto xv = x.data();
    for (size_t e = 0; e < xv.size(); ++e) {
      const T saved = xv[e];
      xv[e] = saved + static_cast<T>(eps);
      const double sp = project(f(nullptr, inputs));
      xv[e] = saved - static_cast<T>(eps);
      const double sm = project(f(nullptr, inputs));
      xv[e] = saved;
      const double fd = (sp - sm) / (2.0 * eps);
      const double adv = static_cast<double>(ad_grads[k][e]);
      const double abs_err = std::abs(fd - adv);
      const double rel = abs_err / std::max({1.0, std::abs(fd), std::abs(adv)});
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      ++rep.checked;
    }
  }
  return rep;
}

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<T>::zeros(std::move(s));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace edcflow::ad
