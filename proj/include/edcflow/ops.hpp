#pragma once

#include <algorithm>
#include <cmath>

#include "edcflow/kernels.hpp"
#include "edcflow/parallel.hpp"
#include "edcflow/tensor.hpp"

// Differentiable primitives. Every op computes its result eagerly and, when a
// tape is supplied and some input requires gradients, records a closure that
// accumulates input gradients from the output gradient. A null tape runs
// forward-only.
namespace edcflow::ad {

namespace detail {

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  check(a.shape() == b.shape(), ErrorKind::ShapeError,
        std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// grad += gout if the output gradient buffer was ever touched
template <typename T>
inline bool has_out_grad(Tensor<T>& out) {
  return out.has_grad();
}

}  // namespace detail

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto out = Tensor<T>::zeros(a.shape());
  kern::vadd(a.data().data(), b.data().data(), out.data().data(), a.data().size());
  if (tracked(tape, a, b)) {
    out.set_requires_grad(true);
    Tensor<T> a_ = a, b_ = b, o_ = out;
    tape->record([a_, b_, o_]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      if (a_.requires_grad()) kern::axpy(T(1), g.data(), a_.grad().data(), g.size());
      if (b_.requires_grad()) kern::axpy(T(1), g.data(), b_.grad().data(), g.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  auto out = Tensor<T>::zeros(a.shape());
  kern::vsub(a.data().data(), b.data().data(), out.data().data(), a.data().size());
  if (tracked(tape, a, b)) {
    out.set_requires_grad(true);
    Tensor<T> a_ = a, b_ = b, o_ = out;
    tape->record([a_, b_, o_]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      if (a_.requires_grad()) kern::axpy(T(1), g.data(), a_.grad().data(), g.size());
      if (b_.requires_grad()) kern::axpy(T(-1), g.data(), b_.grad().data(), g.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  auto out = Tensor<T>::zeros(a.shape());
  kern::vmul(a.data().data(), b.data().data(), out.data().data(), a.data().size());
  if (tracked(tape, a, b)) {
    out.set_requires_grad(true);
    Tensor<T> a_ = a, b_ = b, o_ = out;
    tape->record([a_, b_, o_]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      const size_t n = g.size();
      if (a_.requires_grad()) {
        auto ga = a_.grad();
        auto bv = b_.data();
        for (size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
      }
      if (b_.requires_grad()) {
        auto gb = b_.grad();
        auto av = a_.data();
        for (size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

// scale * x + shift, elementwise
template <typename T>
Tensor<T> affine(Tape<T>* tape, const Tensor<T>& x, T scale, T shift) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = scale * xv[i] + shift;
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, scale]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      kern::axpy(scale, g.data(), x_.grad().data(), g.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      auto xv2 = x_.data();
      for (size_t i = 0; i < g.size(); ++i)
        if (xv2[i] > T(0)) gx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = T(1) / (T(1) + std::exp(-xv[i]));
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      auto y = o_.data();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_op(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      auto y = o_.data();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> abs_op(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = std::abs(xv[i]);
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      auto xv2 = x_.data();
      for (size_t i = 0; i < g.size(); ++i) {
        if (xv2[i] > T(0)) gx[i] += g[i];
        else if (xv2[i] < T(0)) gx[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros({1});
  out.data()[0] = kern::sum(x.data().data(), x.data().size());
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_]() mutable {
      if (!o_.has_grad()) return;
      T g = o_.grad()[0];
      auto gx = x_.grad();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros({1});
  const T inv = T(1) / static_cast<T>(x.numel());
  out.data()[0] = kern::sum(x.data().data(), x.data().size()) * inv;
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, inv]() mutable {
      if (!o_.has_grad()) return;
      T g = o_.grad()[0] * inv;
      auto gx = x_.grad();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

// out = x * s[index]; gradients reach both factors
template <typename T>
Tensor<T> mul_scalar_t(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s, int64_t index) {
  check(index >= 0 && index < s.numel(), ErrorKind::ShapeError, "mul_scalar_t: index out of range");
  const T sv = s.data()[static_cast<size_t>(index)];
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] * sv;
  if (tracked(tape, x, s)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, s_ = s, o_ = out;
    tape->record([x_, s_, o_, index, sv]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      if (x_.requires_grad()) kern::axpy(sv, g.data(), x_.grad().data(), g.size());
      if (s_.requires_grad())
        s_.grad()[static_cast<size_t>(index)] += kern::dot(x_.data().data(), g.data(), g.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(Tape<T>* tape, const std::vector<Tensor<T>>& parts, int axis) {
  check(!parts.empty(), ErrorKind::ShapeError, "concat: no inputs");
  const int rank = parts[0].rank();
  check(axis >= 0 && axis < rank, ErrorKind::ShapeError, "concat: bad axis");
  Shape out_shape = parts[0].shape();
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    check(p.rank() == rank, ErrorKind::ShapeError, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis)
        check(p.dim(i) == out_shape[static_cast<size_t>(i)], ErrorKind::ShapeError,
              "concat: shape mismatch off-axis");
    axis_total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;

  int64_t outer = 1, tail = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) tail *= out_shape[static_cast<size_t>(i)];

  auto out = Tensor<T>::zeros(out_shape);
  auto ov = out.data();
  const int64_t out_stride = axis_total * tail;
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t blk = p.dim(axis) * tail;
    auto pv = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(pv.data() + o * blk, blk, ov.data() + o * out_stride + offset);
    offset += blk;
  }

  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> parts_ = parts;
    Tensor<T> o_ = out;
    tape->record([parts_, o_, outer, out_stride]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      int64_t off = 0;
      for (auto& p : parts_) {
        const int64_t pblk = p.numel() / outer;
        if (p.requires_grad()) {
          auto gp = p.grad();
          for (int64_t o = 0; o < outer; ++o)
            kern::vadd(gp.data() + o * pblk, g.data() + o * out_stride + off,
                       gp.data() + o * pblk, static_cast<size_t>(pblk));
        }
        off += pblk;
      }
    });
  }
  return out;
}

// out = x[i] along the leading axis
template <typename T>
Tensor<T> slice0(Tape<T>* tape, const Tensor<T>& x, int64_t i) {
  check(x.rank() >= 1 && i >= 0 && i < x.dim(0), ErrorKind::ShapeError, "slice0: index out of range");
  Shape s(x.shape().begin() + 1, x.shape().end());
  if (s.empty()) s = {1};
  const int64_t blk = numel(s);
  auto out = Tensor<T>::zeros(s);
  std::copy_n(x.data().data() + i * blk, blk, out.data().data());
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, i, blk]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      kern::vadd(gx.data() + i * blk, g.data(), gx.data() + i * blk, static_cast<size_t>(blk));
    });
  }
  return out;
}

// out = x[:, c0:c1, ...] for tensors of rank >= 2
template <typename T>
Tensor<T> slice_ch(Tape<T>* tape, const Tensor<T>& x, int64_t c0, int64_t c1) {
  check(x.rank() >= 2 && c0 >= 0 && c1 > c0 && c1 <= x.dim(1), ErrorKind::ShapeError,
        "slice_ch: bad channel range");
  Shape s = x.shape();
  s[1] = c1 - c0;
  int64_t tail = 1;
  for (int i = 2; i < x.rank(); ++i) tail *= x.dim(i);
  const int64_t in_blk = x.dim(1) * tail, out_blk = (c1 - c0) * tail;
  auto out = Tensor<T>::zeros(s);
  auto ov = out.data();
  auto xv = x.data();
  for (int64_t n = 0; n < x.dim(0); ++n)
    std::copy_n(xv.data() + n * in_blk + c0 * tail, out_blk, ov.data() + n * out_blk);
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, c0, tail, in_blk, out_blk]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      for (int64_t n = 0; n < x_.dim(0); ++n)
        kern::vadd(gx.data() + n * in_blk + c0 * tail, g.data() + n * out_blk,
                   gx.data() + n * in_blk + c0 * tail, static_cast<size_t>(out_blk));
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape s) {
  check(numel(s) == x.numel(), ErrorKind::ShapeError,
        "reshape: element count mismatch " + shape_str(x.shape()) + " -> " + shape_str(s));
  auto out = Tensor<T>::from(std::move(s), std::vector<T>(x.data().begin(), x.data().end()));
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      kern::vadd(x_.grad().data(), g.data(), x_.grad().data(), g.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose2d(Tape<T>* tape, const Tensor<T>& x) {
  check(x.rank() == 2, ErrorKind::ShapeError, "transpose2d: rank-2 tensor required");
  const int64_t m = x.dim(0), n = x.dim(1);
  auto out = Tensor<T>::zeros({n, m});
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) ov[j * m + i] = xv[i * n + j];
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, m, n]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

// numerically stabilized softmax along one axis
template <typename T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x, int axis) {
  check(axis >= 0 && axis < x.rank(), ErrorKind::ShapeError, "softmax: bad axis");
  const int64_t m = x.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * m * inner + i;
      T mx = xv[base];
      for (int64_t j = 1; j < m; ++j) mx = std::max(mx, xv[base + j * inner]);
      T s = T(0);
      for (int64_t j = 0; j < m; ++j) {
        T e = std::exp(xv[base + j * inner] - mx);
        ov[base + j * inner] = e;
        s += e;
      }
      const T invs = T(1) / s;
      for (int64_t j = 0; j < m; ++j) ov[base + j * inner] *= invs;
    }
  }
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, outer, inner, m]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto y = o_.data();
      auto gx = x_.grad();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
          const int64_t base = o * m * inner + i;
          T dotv = T(0);
          for (int64_t j = 0; j < m; ++j) dotv += g[base + j * inner] * y[base + j * inner];
          for (int64_t j = 0; j < m; ++j)
            gx[base + j * inner] += y[base + j * inner] * (g[base + j * inner] - dotv);
        }
      }
    });
  }
  return out;
}

// out[n, m] = <x[n, :], w[m, :]> + b[m]
template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1), ErrorKind::ShapeError,
        "linear: expected x(N,K), w(M,K)");
  const int64_t n = x.dim(0), k = x.dim(1), m = w.dim(0);
  const bool has_b = b.defined();
  if (has_b)
    check(b.numel() == m, ErrorKind::ShapeError, "linear: bias length mismatch");
  auto out = Tensor<T>::zeros({n, m});
  auto xv = x.data();
  auto wv = w.data();
  auto ov = out.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j)
      ov[i * m + j] = kern::dot(xv.data() + i * k, wv.data() + j * k, static_cast<size_t>(k)) +
                      (has_b ? b.data()[static_cast<size_t>(j)] : T(0));
  bool track = has_b ? tracked(tape, x, w, b) : tracked(tape, x, w);
  if (track) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, w_ = w, b_ = b, o_ = out;
    tape->record([x_, w_, b_, o_, n, k, m]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      if (x_.requires_grad()) {
        auto gx = x_.grad();
        auto wv2 = w_.data();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < m; ++j)
            kern::axpy(g[i * m + j], wv2.data() + j * k, gx.data() + i * k, static_cast<size_t>(k));
      }
      if (w_.requires_grad()) {
        auto gw = w_.grad();
        auto xv2 = x_.data();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < m; ++j)
            kern::axpy(g[i * m + j], xv2.data() + i * k, gw.data() + j * k, static_cast<size_t>(k));
      }
      if (b_.defined() && b_.requires_grad()) {
        auto gb = b_.grad();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < m; ++j) gb[static_cast<size_t>(j)] += g[i * m + j];
      }
    });
  }
  return out;
}

// out = a * b^T for a(M,K), b(N,K)
template <typename T>
Tensor<T> matmul_nt(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1), ErrorKind::ShapeError,
        "matmul_nt: expected a(M,K), b(N,K)");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  auto out = Tensor<T>::zeros({m, n});
  {
    auto av = a.data();
    auto bv = b.data();
    auto ov = out.data();
    parallel_for(m, [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i)
        for (int64_t j = 0; j < n; ++j)
          ov[i * n + j] = kern::dot(av.data() + i * k, bv.data() + j * k, static_cast<size_t>(k));
    }, std::max<int64_t>(1, 4096 / std::max<int64_t>(n, 1)));
  }
  if (tracked(tape, a, b)) {
    out.set_requires_grad(true);
    Tensor<T> a_ = a, b_ = b, o_ = out;
    tape->record([a_, b_, o_, m, k, n]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      if (a_.requires_grad()) {
        auto ga = a_.grad();
        auto bv = b_.data();
        parallel_for(m, [&](int64_t i0, int64_t i1) {
          for (int64_t i = i0; i < i1; ++i)
            for (int64_t j = 0; j < n; ++j)
              kern::axpy(g[i * n + j], bv.data() + j * k, ga.data() + i * k, static_cast<size_t>(k));
        }, 8);
      }
      if (b_.requires_grad()) {
        auto gb = b_.grad();
        auto av = a_.data();
        parallel_for(n, [&](int64_t j0, int64_t j1) {
          for (int64_t j = j0; j < j1; ++j)
            for (int64_t i = 0; i < m; ++i)
              kern::axpy(g[i * n + j], av.data() + i * k, gb.data() + j * k, static_cast<size_t>(k));
        }, 8);
      }
    });
  }
  return out;
}

// per-channel spatial mean: (N,C,H,W) -> (N,C)
template <typename T>
Tensor<T> mean_hw(Tape<T>* tape, const Tensor<T>& x) {
  check(x.rank() == 4, ErrorKind::ShapeError, "mean_hw: NCHW tensor required");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto out = Tensor<T>::zeros({n, c});
  auto xv = x.data();
  auto ov = out.data();
  const T inv = T(1) / static_cast<T>(hw);
  for (int64_t i = 0; i < n * c; ++i)
    ov[i] = kern::sum(xv.data() + i * hw, static_cast<size_t>(hw)) * inv;
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, n, c, hw, inv]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      for (int64_t i = 0; i < n * c; ++i) {
        const T gv = g[i] * inv;
        T* dst = gx.data() + i * hw;
        for (int64_t j = 0; j < hw; ++j) dst[j] += gv;
      }
    });
  }
  return out;
}

// out[n,c,h,w] = x[n,c,h,w] * gate[n,c]
template <typename T>
Tensor<T> mul_channel_gate(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gate) {
  check(x.rank() == 4 && gate.rank() == 2 && gate.dim(0) == x.dim(0) && gate.dim(1) == x.dim(1),
        ErrorKind::ShapeError, "mul_channel_gate: gate must be (N,C)");
  const int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto gv = gate.data();
  auto ov = out.data();
  for (int64_t i = 0; i < nc; ++i) {
    const T s = gv[i];
    const T* src = xv.data() + i * hw;
    T* dst = ov.data() + i * hw;
    for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] * s;
  }
  if (tracked(tape, x, gate)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, g_ = gate, o_ = out;
    tape->record([x_, g_, o_, nc, hw]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      if (x_.requires_grad()) {
        auto gx = x_.grad();
        auto gv2 = g_.data();
        for (int64_t i = 0; i < nc; ++i)
          kern::axpy(gv2[i], g.data() + i * hw, gx.data() + i * hw, static_cast<size_t>(hw));
      }
      if (g_.requires_grad()) {
        auto gg = g_.grad();
        auto xv2 = x_.data();
        for (int64_t i = 0; i < nc; ++i)
          gg[i] += kern::dot(xv2.data() + i * hw, g.data() + i * hw, static_cast<size_t>(hw));
      }
    });
  }
  return out;
}

}  // namespace edcflow::ad
