#pragma once

#include "edcflow/ops.hpp"

namespace edcflow::ad {

// Bilinear sampling of src (C,H,W) at per-pixel absolute positions
// coords (2,Ho,Wo), channel 0 = x, channel 1 = y. Taps outside the source
// rectangle contribute zero. Gradients reach both the source values and the
// coordinates.
template <typename T>
Tensor<T> bilinear_sample(Tape<T>* tape, const Tensor<T>& src, const Tensor<T>& coords) {
  check(src.rank() == 3, ErrorKind::ShapeError, "bilinear_sample: src must be (C,H,W)");
  check(coords.rank() == 3 && coords.dim(0) == 2, ErrorKind::ShapeError,
        "bilinear_sample: coords must be (2,Ho,Wo)");
  const int64_t c = src.dim(0), h = src.dim(1), w = src.dim(2);
  const int64_t oh = coords.dim(1), ow = coords.dim(2);
  const int64_t np = oh * ow, plane = h * w;

  auto out = Tensor<T>::zeros({c, oh, ow});
  {
    auto sv = src.data();
    auto cv = coords.data();
    auto ov = out.data();
    parallel_for(np, [&](int64_t p0, int64_t p1) {
      for (int64_t p = p0; p < p1; ++p) {
        const T x = cv[p], y = cv[np + p];
        const int64_t x0 = static_cast<int64_t>(std::floor(x));
        const int64_t y0 = static_cast<int64_t>(std::floor(y));
        const T fx = x - static_cast<T>(x0), fy = y - static_cast<T>(y0);
        const bool in00 = x0 >= 0 && x0 < w && y0 >= 0 && y0 < h;
        const bool in01 = x0 + 1 >= 0 && x0 + 1 < w && y0 >= 0 && y0 < h;
        const bool in10 = x0 >= 0 && x0 < w && y0 + 1 >= 0 && y0 + 1 < h;
        const bool in11 = x0 + 1 >= 0 && x0 + 1 < w && y0 + 1 >= 0 && y0 + 1 < h;
        const T w00 = (T(1) - fx) * (T(1) - fy), w01 = fx * (T(1) - fy);
        const T w10 = (T(1) - fx) * fy, w11 = fx * fy;
        for (int64_t ch = 0; ch < c; ++ch) {
          const T* s = sv.data() + ch * plane;
          T v = T(0);
          if (in00) v += w00 * s[y0 * w + x0];
          if (in01) v += w01 * s[y0 * w + x0 + 1];
          if (in10) v += w10 * s[(y0 + 1) * w + x0];
          if (in11) v += w11 * s[(y0 + 1) * w + x0 + 1];
          ov[ch * np + p] = v;
        }
      }
    }, 128);
  }

  if (tracked(tape, src, coords)) {
    out.set_requires_grad(true);
    Tensor<T> s_ = src, c_ = coords, o_ = out;
    tape->record([s_, c_, o_, c, h, w, np, plane]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto sv = s_.data();
      auto cv = c_.data();
      const bool need_s = s_.requires_grad();
      const bool need_c = c_.requires_grad();
      std::span<T> gs = need_s ? s_.grad() : std::span<T>{};
      std::span<T> gc = need_c ? c_.grad() : std::span<T>{};
      // scatter is sequential: distinct output pixels may hit the same tap
      for (int64_t p = 0; p < np; ++p) {
        const T x = cv[p], y = cv[np + p];
        const int64_t x0 = static_cast<int64_t>(std::floor(x));
        const int64_t y0 = static_cast<int64_t>(std::floor(y));
        const T fx = x - static_cast<T>(x0), fy = y - static_cast<T>(y0);
        const bool in00 = x0 >= 0 && x0 < w && y0 >= 0 && y0 < h;
        const bool in01 = x0 + 1 >= 0 && x0 + 1 < w && y0 >= 0 && y0 < h;
        const bool in10 = x0 >= 0 && x0 < w && y0 + 1 >= 0 && y0 + 1 < h;
        const bool in11 = x0 + 1 >= 0 && x0 + 1 < w && y0 + 1 >= 0 && y0 + 1 < h;
        const T w00 = (T(1) - fx) * (T(1) - fy), w01 = fx * (T(1) - fy);
        const T w10 = (T(1) - fx) * fy, w11 = fx * fy;
        T dx_acc = T(0), dy_acc = T(0);
        for (int64_t ch = 0; ch < c; ++ch) {
          const T go = g[ch * np + p];
          if (go == T(0)) continue;
          const T* s = sv.data() + ch * plane;
          const T v00 = in00 ? s[y0 * w + x0] : T(0);
          const T v01 = in01 ? s[y0 * w + x0 + 1] : T(0);
          const T v10 = in10 ? s[(y0 + 1) * w + x0] : T(0);
          const T v11 = in11 ? s[(y0 + 1) * w + x0 + 1] : T(0);
          if (need_s) {
            T* d = gs.data() + ch * plane;
            if (in00) d[y0 * w + x0] += w00 * go;
            if (in01) d[y0 * w + x0 + 1] += w01 * go;
            if (in10) d[(y0 + 1) * w + x0] += w10 * go;
            if (in11) d[(y0 + 1) * w + x0 + 1] += w11 * go;
          }
          if (need_c) {
            dx_acc += go * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
            dy_acc += go * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
          }
        }
        if (need_c) {
          gc[p] += dx_acc;
          gc[np + p] += dy_acc;
        }
      }
    });
  }
  return out;
}

// 2x2 average pooling with stride 2 (trailing odd row/column dropped)
template <typename T>
Tensor<T> avg_pool2d(Tape<T>* tape, const Tensor<T>& x) {
  check(x.rank() == 4, ErrorKind::ShapeError, "avg_pool2d: NCHW tensor required");
  const int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = h / 2, ow = w / 2;
  check(oh >= 1 && ow >= 1, ErrorKind::ShapeError, "avg_pool2d: input too small");
  auto out = Tensor<T>::zeros({x.dim(0), x.dim(1), oh, ow});
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < nc; ++i) {
    const T* src = xv.data() + i * h * w;
    T* dst = ov.data() + i * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        const T* r0 = src + (2 * oy) * w + 2 * ox;
        const T* r1 = r0 + w;
        dst[oy * ow + ox] = (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
      }
  }
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, nc, h, w, oh, ow]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto gx = x_.grad();
      for (int64_t i = 0; i < nc; ++i) {
        const T* gsrc = g.data() + i * oh * ow;
        T* gdst = gx.data() + i * h * w;
        for (int64_t oy = 0; oy < oh; ++oy)
          for (int64_t ox = 0; ox < ow; ++ox) {
            const T gv = gsrc[oy * ow + ox] * T(0.25);
            T* r0 = gdst + (2 * oy) * w + 2 * ox;
            r0[0] += gv;
            r0[1] += gv;
            r0[w] += gv;
            r0[w + 1] += gv;
          }
      }
    });
  }
  return out;
}

namespace detail {

struct UpTap {
  int64_t a, b;
  double wb;  // weight of tap b; tap a gets 1-wb
};

inline UpTap up2_tap(int64_t o, int64_t n) {
  // source position for align_corners=false, borders clamped
  double s = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
  double f = std::floor(s);
  int64_t a = static_cast<int64_t>(f);
  double wb = s - f;
  int64_t b = a + 1;
  if (a < 0) a = 0;
  if (b > n - 1) b = n - 1;
  return {a, b, wb};
}

}  // namespace detail

// bilinear 2x upsampling of (N,C,H,W)
template <typename T>
Tensor<T> upsample2x(Tape<T>* tape, const Tensor<T>& x) {
  check(x.rank() == 4, ErrorKind::ShapeError, "upsample2x: NCHW tensor required");
  const int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = 2 * h, ow = 2 * w;
  auto out = Tensor<T>::zeros({x.dim(0), x.dim(1), oh, ow});
  {
    auto xv = x.data();
    auto ov = out.data();
    parallel_for(nc, [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i) {
        const T* src = xv.data() + i * h * w;
        T* dst = ov.data() + i * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const auto ty = detail::up2_tap(oy, h);
          const T wy = static_cast<T>(ty.wb);
          for (int64_t ox = 0; ox < ow; ++ox) {
            const auto tx = detail::up2_tap(ox, w);
            const T wx = static_cast<T>(tx.wb);
            const T v00 = src[ty.a * w + tx.a], v01 = src[ty.a * w + tx.b];
            const T v10 = src[ty.b * w + tx.a], v11 = src[ty.b * w + tx.b];
            dst[oy * ow + ox] = (T(1) - wy) * ((T(1) - wx) * v00 + wx * v01) +
                                wy * ((T(1) - wx) * v10 + wx * v11);
          }
        }
      }
    }, 1);
  }
  if (tracked(tape, x)) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, o_ = out;
    tape->record([x_, o_, nc, h, w, oh, ow]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      std::span<T> gx = x_.grad();
      parallel_for(nc, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
          const T* gsrc = g.data() + i * oh * ow;
          T* gdst = gx.data() + i * h * w;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const auto ty = detail::up2_tap(oy, h);
            const T wy = static_cast<T>(ty.wb);
            for (int64_t ox = 0; ox < ow; ++ox) {
              const auto tx = detail::up2_tap(ox, w);
              const T wx = static_cast<T>(tx.wb);
              const T gv = gsrc[oy * ow + ox];
              gdst[ty.a * w + tx.a] += (T(1) - wy) * (T(1) - wx) * gv;
              gdst[ty.a * w + tx.b] += (T(1) - wy) * wx * gv;
              gdst[ty.b * w + tx.a] += wy * (T(1) - wx) * gv;
              gdst[ty.b * w + tx.b] += wy * wx * gv;
            }
          }
        }
      }, 1);
    });
  }
  return out;
}

// Convex-combination upsampling by an integer factor. weights must hold
// normalized 3x3-neighborhood coefficients, shape (factor^2, 9, h, w); the
// output is the weighted sum of `factor * flow` over the coarse neighborhood.
// Neighbors are clamped at the border so constant fields are preserved
// exactly (times the factor).
template <typename T>
Tensor<T> convex_combine(Tape<T>* tape, const Tensor<T>& flow, const Tensor<T>& weights, int64_t factor) {
  check(flow.rank() == 3 && flow.dim(0) == 2, ErrorKind::ShapeError, "convex_combine: flow must be (2,h,w)");
  const int64_t h = flow.dim(1), w = flow.dim(2);
  check(weights.rank() == 4 && weights.dim(0) == factor * factor && weights.dim(1) == 9 &&
            weights.dim(2) == h && weights.dim(3) == w,
        ErrorKind::ShapeError, "convex_combine: weights must be (factor^2, 9, h, w)");
  const int64_t oh = h * factor, ow = w * factor, np = h * w;
  auto out = Tensor<T>::zeros({2, oh, ow});
  const T fscale = static_cast<T>(factor);
  {
    auto fv = flow.data();
    auto wv = weights.data();
    auto ov = out.data();
    parallel_for(h, [&](int64_t y0, int64_t y1) {
      for (int64_t yc = y0; yc < y1; ++yc)
        for (int64_t xc = 0; xc < w; ++xc)
          for (int64_t sy = 0; sy < factor; ++sy)
            for (int64_t sx = 0; sx < factor; ++sx) {
              const int64_t sub = sy * factor + sx;
              const int64_t oy = yc * factor + sy, ox = xc * factor + sx;
              T vx = T(0), vy = T(0);
              for (int64_t t = 0; t < 9; ++t) {
                const int64_t ny = std::clamp<int64_t>(yc + t / 3 - 1, 0, h - 1);
                const int64_t nx = std::clamp<int64_t>(xc + t % 3 - 1, 0, w - 1);
                const T m = wv[(sub * 9 + t) * np + yc * w + xc];
                vx += m * fv[ny * w + nx];
                vy += m * fv[np + ny * w + nx];
              }
              ov[oy * ow + ox] = fscale * vx;
              ov[oh * ow + oy * ow + ox] = fscale * vy;
            }
    }, 4);
  }
  if (tracked(tape, flow, weights)) {
    out.set_requires_grad(true);
    Tensor<T> f_ = flow, w_ = weights, o_ = out;
    tape->record([f_, w_, o_, h, w, oh, ow, np, factor, fscale]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto fv = f_.data();
      auto wv = w_.data();
      const bool need_f = f_.requires_grad();
      const bool need_w = w_.requires_grad();
      std::span<T> gf = need_f ? f_.grad() : std::span<T>{};
      std::span<T> gw = need_w ? w_.grad() : std::span<T>{};
      for (int64_t yc = 0; yc < h; ++yc)
        for (int64_t xc = 0; xc < w; ++xc)
          for (int64_t sy = 0; sy < factor; ++sy)
            for (int64_t sx = 0; sx < factor; ++sx) {
              const int64_t sub = sy * factor + sx;
              const int64_t oy = yc * factor + sy, ox = xc * factor + sx;
              const T gx = g[oy * ow + ox];
              const T gy = g[oh * ow + oy * ow + ox];
              if (gx == T(0) && gy == T(0)) continue;
              for (int64_t t = 0; t < 9; ++t) {
                const int64_t ny = std::clamp<int64_t>(yc + t / 3 - 1, 0, h - 1);
                const int64_t nx = std::clamp<int64_t>(xc + t % 3 - 1, 0, w - 1);
                const T m = wv[(sub * 9 + t) * np + yc * w + xc];
                if (need_f) {
                  gf[ny * w + nx] += fscale * m * gx;
                  gf[np + ny * w + nx] += fscale * m * gy;
                }
                if (need_w)
                  gw[(sub * 9 + t) * np + yc * w + xc] +=
                      fscale * (fv[ny * w + nx] * gx + fv[np + ny * w + nx] * gy);
              }
            }
    });
  }
  return out;
}

// Correlation retrieval around flow-displaced positions. Each pyramid level
// holds one plane per reference pixel, shape (H8*W8, 1, hl, wl). For level l
// the center is (p + flow(p)) / 2^l and the (2r+1)^2 integer offsets around it
// are sampled bilinearly with zero padding. Output channels are ordered
// level-major, then row-major over (dy, dx). The flow enters as coordinates
// only and receives no gradient; gradients reach the volume values.
template <typename T>
Tensor<T> corr_lookup(Tape<T>* tape, const std::vector<Tensor<T>>& levels, const Tensor<T>& flow8,
                      int64_t radius) {
  check(!levels.empty(), ErrorKind::ShapeError, "corr_lookup: no pyramid levels");
  check(radius >= 0, ErrorKind::InvalidConfig, "corr_lookup: radius must be >= 0");
  check(flow8.rank() == 3 && flow8.dim(0) == 2, ErrorKind::ShapeError, "corr_lookup: flow must be (2,H8,W8)");
  const int64_t h8 = flow8.dim(1), w8 = flow8.dim(2), np = h8 * w8;
  for (const auto& lv : levels)
    check(lv.rank() == 4 && lv.dim(0) == np && lv.dim(1) == 1, ErrorKind::ShapeError,
          "corr_lookup: level must be (H8*W8, 1, hl, wl)");
  const int64_t side = 2 * radius + 1, taps = side * side;
  const int64_t nl = static_cast<int64_t>(levels.size());
  auto out = Tensor<T>::zeros({nl * taps, h8, w8});

  auto fv = flow8.data();
  auto ov = out.data();
  for (int64_t l = 0; l < nl; ++l) {
    const auto& lv = levels[static_cast<size_t>(l)];
    const int64_t lh = lv.dim(2), lw = lv.dim(3);
    auto lvd = lv.data();
    const T inv = static_cast<T>(1.0 / static_cast<double>(int64_t(1) << l));
    parallel_for(np, [&](int64_t p0, int64_t p1) {
      for (int64_t p = p0; p < p1; ++p) {
        const int64_t py = p / w8, px = p % w8;
        const T cx = (static_cast<T>(px) + fv[p]) * inv;
        const T cy = (static_cast<T>(py) + fv[np + p]) * inv;
        const T* plane = lvd.data() + p * lh * lw;
        for (int64_t dy = -radius; dy <= radius; ++dy)
          for (int64_t dx = -radius; dx <= radius; ++dx) {
            const T sx = cx + static_cast<T>(dx), sy = cy + static_cast<T>(dy);
            const int64_t x0 = static_cast<int64_t>(std::floor(sx));
            const int64_t y0 = static_cast<int64_t>(std::floor(sy));
            const T fx = sx - static_cast<T>(x0), fyy = sy - static_cast<T>(y0);
            T v = T(0);
            if (y0 >= 0 && y0 < lh) {
              if (x0 >= 0 && x0 < lw) v += (T(1) - fx) * (T(1) - fyy) * plane[y0 * lw + x0];
              if (x0 + 1 >= 0 && x0 + 1 < lw) v += fx * (T(1) - fyy) * plane[y0 * lw + x0 + 1];
            }
            if (y0 + 1 >= 0 && y0 + 1 < lh) {
              if (x0 >= 0 && x0 < lw) v += (T(1) - fx) * fyy * plane[(y0 + 1) * lw + x0];
              if (x0 + 1 >= 0 && x0 + 1 < lw) v += fx * fyy * plane[(y0 + 1) * lw + x0 + 1];
            }
            const int64_t ch = l * taps + (dy + radius) * side + (dx + radius);
            ov[ch * np + p] = v;
          }
      }
    }, 64);
  }

  bool any = false;
  for (const auto& lv : levels) any = any || lv.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> levels_ = levels;
    Tensor<T> f_ = flow8, o_ = out;
    tape->record([levels_, f_, o_, np, h8, w8, radius, side, taps, nl]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto fv2 = f_.data();
      for (int64_t l = 0; l < nl; ++l) {
        auto& lv = levels_[static_cast<size_t>(l)];
        if (!lv.requires_grad()) continue;
        const int64_t lh = lv.dim(2), lw = lv.dim(3);
        std::span<T> gl = lv.grad();
        const T inv = static_cast<T>(1.0 / static_cast<double>(int64_t(1) << l));
        // per-p planes are disjoint, so the scatter parallelizes over p
        parallel_for(np, [&](int64_t p0, int64_t p1) {
          for (int64_t p = p0; p < p1; ++p) {
            const int64_t py = p / w8, px = p % w8;
            const T cx = (static_cast<T>(px) + fv2[p]) * inv;
            const T cy = (static_cast<T>(py) + fv2[np + p]) * inv;
            T* gplane = gl.data() + p * lh * lw;
            for (int64_t dy = -radius; dy <= radius; ++dy)
              for (int64_t dx = -radius; dx <= radius; ++dx) {
                const int64_t ch = l * taps + (dy + radius) * side + (dx + radius);
                const T go = g[ch * np + p];
                if (go == T(0)) continue;
                const T sx = cx + static_cast<T>(dx), sy = cy + static_cast<T>(dy);
                const int64_t x0 = static_cast<int64_t>(std::floor(sx));
                const int64_t y0 = static_cast<int64_t>(std::floor(sy));
                const T fx = sx - static_cast<T>(x0), fyy = sy - static_cast<T>(y0);
                if (y0 >= 0 && y0 < lh) {
                  if (x0 >= 0 && x0 < lw) gplane[y0 * lw + x0] += (T(1) - fx) * (T(1) - fyy) * go;
                  if (x0 + 1 >= 0 && x0 + 1 < lw) gplane[y0 * lw + x0 + 1] += fx * (T(1) - fyy) * go;
                }
                if (y0 + 1 >= 0 && y0 + 1 < lh) {
                  if (x0 >= 0 && x0 < lw) gplane[(y0 + 1) * lw + x0] += (T(1) - fx) * fyy * go;
                  if (x0 + 1 >= 0 && x0 + 1 < lw) gplane[(y0 + 1) * lw + x0 + 1] += fx * fyy * go;
                }
              }
          }
        }, 64);
      }
    });
  }
  return out;
}

}  // namespace edcflow::ad
