#pragma once

#include <cstring>

#include "edcflow/ops.hpp"

namespace edcflow::ad {

namespace detail {

// col[(ic*KH+ky)*KW+kx][oy*OW+ox] = x[ic][oy*s-p+ky][ox*s-p+kx], zero outside
template <typename T>
void im2col(const T* x, int64_t ic_count, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* col) {
  const int64_t k_rows = ic_count * kh * kw;
  parallel_for(k_rows, [&](int64_t k0, int64_t k1) {
    for (int64_t k = k0; k < k1; ++k) {
      const int64_t ic = k / (kh * kw);
      const int64_t ky = (k / kw) % kh;
      const int64_t kx = k % kw;
      const T* src_plane = x + ic * h * w;
      T* dst = col + k * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t iy = oy * stride - pad + ky;
        T* drow = dst + oy * ow;
        if (iy < 0 || iy >= h) {
          std::fill(drow, drow + ow, T(0));
          continue;
        }
        const T* srow = src_plane + iy * w;
        if (stride == 1) {
          const int64_t ox_lo = std::max<int64_t>(0, pad - kx);
          const int64_t ox_hi = std::min<int64_t>(ow, w + pad - kx);
          if (ox_lo > 0) std::fill(drow, drow + ox_lo, T(0));
          if (ox_hi > ox_lo) std::memcpy(drow + ox_lo, srow + ox_lo + kx - pad,
                                         static_cast<size_t>(ox_hi - ox_lo) * sizeof(T));
          if (ox_hi < ow) std::fill(drow + std::max<int64_t>(ox_hi, ox_lo), drow + ow, T(0));
        } else {
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
          }
        }
      }
    }
  }, 4);
}

// transpose of im2col: x[ic][iy][ix] += col[...] contributions
template <typename T>
void col2im_acc(const T* col, int64_t ic_count, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* x) {
  parallel_for(ic_count, [&](int64_t c0, int64_t c1) {
    for (int64_t ic = c0; ic < c1; ++ic) {
      T* dst_plane = x + ic * h * w;
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx) {
          const T* src = col + ((ic * kh + ky) * kw + kx) * oh * ow;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const T* srow = src + oy * ow;
            T* drow = dst_plane + iy * w;
            if (stride == 1) {
              const int64_t ox_lo = std::max<int64_t>(0, pad - kx);
              const int64_t ox_hi = std::min<int64_t>(ow, w + pad - kx);
              if (ox_hi > ox_lo)
                kern::vadd(drow + ox_lo + kx - pad, srow + ox_lo, drow + ox_lo + kx - pad,
                           static_cast<size_t>(ox_hi - ox_lo));
            } else {
              for (int64_t ox = 0; ox < ow; ++ox) {
                const int64_t ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < w) drow[ix] += srow[ox];
              }
            }
          }
        }
      }
    }
  }, 1);
}

// out (OC, P) += w (OC, K) * col (K, P); out pre-filled with bias
template <typename T>
void gemm_rows(const T* wmat, size_t rs, size_t ks, const T* col, int64_t m, int64_t k, int64_t p,
               T* out) {
  const auto& kt = kern::table<T>();
  const int64_t block = 8;
  const int64_t nblocks = (m + block - 1) / block;
  parallel_for(nblocks, [&](int64_t b0, int64_t b1) {
    for (int64_t b = b0; b < b1; ++b) {
      const int64_t r0 = b * block, r1 = std::min(m, r0 + block);
      kt.gemm_acc(wmat + static_cast<size_t>(r0) * rs, rs, ks, col, static_cast<size_t>(r1 - r0),
                  static_cast<size_t>(k), static_cast<size_t>(p), out + r0 * p);
    }
  }, 1);
}

}  // namespace detail

// 2D cross-correlation with zero padding, NCHW input, (OC,IC,KH,KW) weights.
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int64_t stride, int64_t pad) {
  check(x.rank() == 4 && w.rank() == 4, ErrorKind::ShapeError, "conv2d: expected NCHW input and OIHW weights");
  check(x.dim(1) == w.dim(1), ErrorKind::ShapeError,
        "conv2d: input channels " + std::to_string(x.dim(1)) + " != weight channels " + std::to_string(w.dim(1)));
  check(stride >= 1 && pad >= 0, ErrorKind::ShapeError, "conv2d: bad stride/pad");
  const int64_t n = x.dim(0), ic = x.dim(1), h = x.dim(2), ww = x.dim(3);
  const int64_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (ww + 2 * pad - kw) / stride + 1;
  check(oh >= 1 && ow >= 1, ErrorKind::ShapeError, "conv2d: kernel larger than padded input");
  const bool has_b = b.defined();
  if (has_b) check(b.numel() == oc, ErrorKind::ShapeError, "conv2d: bias length mismatch");
  const int64_t k = ic * kh * kw, p = oh * ow;
  const bool unit = (kh == 1 && kw == 1 && stride == 1 && pad == 0);

  auto out = Tensor<T>::zeros({n, oc, oh, ow});
  {
    auto xv = x.data();
    auto wv = w.data();
    auto ov = out.data();
    std::vector<T> col;
    if (!unit) col.resize(static_cast<size_t>(k * p));
    for (int64_t i = 0; i < n; ++i) {
      const T* cptr = xv.data() + i * ic * h * ww;
      if (!unit) {
        detail::im2col(cptr, ic, h, ww, kh, kw, stride, pad, oh, ow, col.data());
        cptr = col.data();
      }
      T* optr = ov.data() + i * oc * p;
      if (has_b) {
        auto bv = b.data();
        for (int64_t c = 0; c < oc; ++c) std::fill(optr + c * p, optr + (c + 1) * p, bv[c]);
      }
      detail::gemm_rows(wv.data(), static_cast<size_t>(k), 1, cptr, oc, k, p, optr);
    }
  }

  bool track = has_b ? tracked(tape, x, w, b) : tracked(tape, x, w);
  if (track) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, w_ = w, b_ = b, o_ = out;
    tape->record([x_, w_, b_, o_, n, ic, h, ww, oc, kh, kw, stride, pad, oh, ow, k, p, unit]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      auto wv = w_.data();
      const bool need_x = x_.requires_grad();
      const bool need_w = w_.requires_grad();
      const bool need_b = b_.defined() && b_.requires_grad();
      std::vector<T> col, dcol;
      if ((need_w && !unit) || need_x) {
        if (!unit) col.resize(static_cast<size_t>(k * p));
        if (need_x && !unit) dcol.resize(static_cast<size_t>(k * p));
      }
      for (int64_t i = 0; i < n; ++i) {
        const T* gout = g.data() + i * oc * p;
        const T* cptr = x_.data().data() + i * ic * h * ww;
        if (!unit && (need_w || need_x)) {
          detail::im2col(cptr, ic, h, ww, kh, kw, stride, pad, oh, ow, col.data());
          cptr = col.data();
        }
        if (need_w) {
          auto gw = w_.grad();
          const auto& kt = kern::table<T>();
          const int64_t block = 8;
          const int64_t nblocks = (oc + block - 1) / block;
          parallel_for(nblocks, [&](int64_t b0, int64_t b1) {
            for (int64_t bb = b0; bb < b1; ++bb) {
              const int64_t c0 = bb * block, c1 = std::min(oc, c0 + block);
              for (int64_t kk = 0; kk < k; ++kk) {
                const T* crow = cptr + kk * p;
                for (int64_t c = c0; c < c1; ++c)
                  gw[c * k + kk] += kt.dot(gout + c * p, crow, static_cast<size_t>(p));
              }
            }
          }, 1);
        }
        if (need_b) {
          auto gb = b_.grad();
          for (int64_t c = 0; c < oc; ++c) gb[c] += kern::sum(gout + c * p, static_cast<size_t>(p));
        }
        if (need_x) {
          auto gx = x_.grad();
          T* dst = gx.data() + i * ic * h * ww;
          // dcol[kk] += sum_c w[c*k + kk] * gout[c]
          if (unit) {
            detail::gemm_rows(wv.data(), 1, static_cast<size_t>(k), gout, k, oc, p, dst);
          } else {
            std::fill(dcol.begin(), dcol.end(), T(0));
            detail::gemm_rows(wv.data(), 1, static_cast<size_t>(k), gout, k, oc, p, dcol.data());
            detail::col2im_acc(dcol.data(), ic, h, ww, kh, kw, stride, pad, oh, ow, dst);
          }
        }
      }
    });
  }
  return out;
}

// Depthwise 3D convolution: x (N,C,T,H,W), w (C,KT,KH,KW), stride 1.
template <typename T>
Tensor<T> dwconv3d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                   int64_t pt, int64_t ph, int64_t pw) {
  check(x.rank() == 5 && w.rank() == 4, ErrorKind::ShapeError,
        "dwconv3d: expected NCTHW input and (C,KT,KH,KW) weights");
  check(x.dim(1) == w.dim(0), ErrorKind::ShapeError, "dwconv3d: channel mismatch");
  const int64_t n = x.dim(0), c = x.dim(1), t = x.dim(2), h = x.dim(3), ww = x.dim(4);
  const int64_t kt = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int64_t ot = t + 2 * pt - kt + 1;
  const int64_t oh = h + 2 * ph - kh + 1;
  const int64_t ow = ww + 2 * pw - kw + 1;
  check(ot >= 1 && oh >= 1 && ow >= 1, ErrorKind::ShapeError, "dwconv3d: kernel larger than padded input");
  const bool has_b = b.defined();
  if (has_b) check(b.numel() == c, ErrorKind::ShapeError, "dwconv3d: bias length mismatch");

  auto out = Tensor<T>::zeros({n, c, ot, oh, ow});
  {
    auto xv = x.data();
    auto wv = w.data();
    auto ov = out.data();
    const int64_t in_plane = t * h * ww, out_plane = ot * oh * ow;
    parallel_for(n * c, [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i) {
        const int64_t ch = i % c;
        const T* src = xv.data() + i * in_plane;
        const T* wc = wv.data() + ch * kt * kh * kw;
        T* dst = ov.data() + i * out_plane;
        if (has_b) std::fill(dst, dst + out_plane, b.data()[static_cast<size_t>(ch)]);
        for (int64_t a = 0; a < kt; ++a)
          for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx) {
              const T wgt = wc[(a * kh + ky) * kw + kx];
              for (int64_t oz = 0; oz < ot; ++oz) {
                const int64_t iz = oz - pt + a;
                if (iz < 0 || iz >= t) continue;
                for (int64_t oy = 0; oy < oh; ++oy) {
                  const int64_t iy = oy - ph + ky;
                  if (iy < 0 || iy >= h) continue;
                  const int64_t ox_lo = std::max<int64_t>(0, pw - kx);
                  const int64_t ox_hi = std::min<int64_t>(ow, ww + pw - kx);
                  if (ox_hi > ox_lo)
                    kern::axpy(wgt, src + (iz * h + iy) * ww + ox_lo + kx - pw,
                               dst + (oz * oh + oy) * ow + ox_lo, static_cast<size_t>(ox_hi - ox_lo));
                }
              }
            }
      }
    }, 1);
  }

  bool track = has_b ? tracked(tape, x, w, b) : tracked(tape, x, w);
  if (track) {
    out.set_requires_grad(true);
    Tensor<T> x_ = x, w_ = w, b_ = b, o_ = out;
    tape->record([x_, w_, b_, o_, n, c, t, h, ww, kt, kh, kw, pt, ph, pw, ot, oh, ow]() mutable {
      if (!o_.has_grad()) return;
      auto g = o_.grad();
      const int64_t in_plane = t * h * ww, out_plane = ot * oh * ow;
      const bool need_x = x_.requires_grad();
      const bool need_w = w_.requires_grad();
      const bool need_b = b_.defined() && b_.requires_grad();
      auto wv = w_.data();
      auto xv = x_.data();
      std::span<T> gx = need_x ? x_.grad() : std::span<T>{};
      std::span<T> gw = need_w ? w_.grad() : std::span<T>{};
      std::span<T> gb = need_b ? b_.grad() : std::span<T>{};
      parallel_for(c, [&](int64_t c0, int64_t c1) {
        for (int64_t ch = c0; ch < c1; ++ch) {
          for (int64_t i = 0; i < n; ++i) {
            const T* gout = g.data() + (i * c + ch) * out_plane;
            const T* src = xv.data() + (i * c + ch) * in_plane;
            const T* wc = wv.data() + ch * kt * kh * kw;
            if (need_b) gb[static_cast<size_t>(ch)] += kern::sum(gout, static_cast<size_t>(out_plane));
            for (int64_t a = 0; a < kt; ++a)
              for (int64_t ky = 0; ky < kh; ++ky)
                for (int64_t kx = 0; kx < kw; ++kx) {
                  const int64_t widx = (a * kh + ky) * kw + kx;
                  T wg = T(0);
                  for (int64_t oz = 0; oz < ot; ++oz) {
                    const int64_t iz = oz - pt + a;
                    if (iz < 0 || iz >= t) continue;
                    for (int64_t oy = 0; oy < oh; ++oy) {
                      const int64_t iy = oy - ph + ky;
                      if (iy < 0 || iy >= h) continue;
                      const int64_t ox_lo = std::max<int64_t>(0, pw - kx);
                      const int64_t ox_hi = std::min<int64_t>(ow, ww + pw - kx);
                      if (ox_hi <= ox_lo) continue;
                      const T* grow = gout + (oz * oh + oy) * ow + ox_lo;
                      const int64_t shift = (iz * h + iy) * ww + ox_lo + kx - pw;
                      if (need_w) wg += kern::dot(grow, src + shift, static_cast<size_t>(ox_hi - ox_lo));
                      if (need_x)
                        kern::axpy(wc[widx], grow, gx.data() + (i * c + ch) * in_plane + shift,
                                   static_cast<size_t>(ox_hi - ox_lo));
                    }
                  }
                  if (need_w) gw[static_cast<size_t>(ch * kt * kh * kw + widx)] += wg;
                }
          }
        }
      }, 1);
    });
  }
  return out;
}

// Depthwise 2D convolution expressed through the 3D path.
template <typename T>
Tensor<T> dwconv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                   int64_t pad) {
  check(x.rank() == 4, ErrorKind::ShapeError, "dwconv2d: NCHW tensor required");
  check(w.rank() == 3, ErrorKind::ShapeError, "dwconv2d: (C,KH,KW) weights required");
  auto x5 = reshape(tape, x, {x.dim(0), x.dim(1), int64_t(1), x.dim(2), x.dim(3)});
  auto w4 = reshape(tape, w, {w.dim(0), int64_t(1), w.dim(1), w.dim(2)});
  auto y = dwconv3d(tape, x5, w4, b, 0, pad, pad);
  return reshape(tape, y, {y.dim(0), y.dim(1), y.dim(3), y.dim(4)});
}

// Depthwise separable 3D convolution: per-channel (KT,KH,KW) filter followed
// by a 1x1x1 channel mix. pw_w has shape (OC, C).
template <typename T>
Tensor<T> dwsep_conv3d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& dw_w, const Tensor<T>& dw_b,
                       const Tensor<T>& pw_w, const Tensor<T>& pw_b, int64_t pt, int64_t ph, int64_t pw) {
  auto mid = dwconv3d(tape, x, dw_w, dw_b, pt, ph, pw);
  check(pw_w.rank() == 2 && pw_w.dim(1) == mid.dim(1), ErrorKind::ShapeError,
        "dwsep_conv3d: pointwise weights must be (OC, C)");
  auto flat = reshape(tape, mid, {mid.dim(0), mid.dim(1), mid.dim(2) * mid.dim(3), mid.dim(4)});
  auto w4 = reshape(tape, pw_w, {pw_w.dim(0), pw_w.dim(1), int64_t(1), int64_t(1)});
  auto y = conv2d(tape, flat, w4, pw_b, 1, 0);
  return reshape(tape, y, {y.dim(0), y.dim(1), mid.dim(2), mid.dim(3), mid.dim(4)});
}

}  // namespace edcflow::ad
