// Compiled with -mavx2 -mfma; entered only after a runtime cpuid check.
#include "kernels_impl.hpp"

#ifdef EDCFLOW_HAVE_AVX2_TU

#include <immintrin.h>

namespace edcflow::kern {
namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

inline double hsum256d(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
  return _mm_cvtsd_f64(s);
}

// ---- float ----

float dot_f(const float* a, const float* b, size_t n) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  if (i + 8 <= n) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    i += 8;
  }
  float r = hsum256(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void axpy_f(float a, const float* x, float* y, size_t n) {
  __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    _mm256_storeu_ps(y + i + 8, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8)));
  }
  if (i + 8 <= n) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    i += 8;
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_f(float a, float* x, size_t n) {
  __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void vadd_f(const float* a, const float* b, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_f(const float* a, const float* b, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_f(const float* a, const float* b, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

float sum_f(const float* x, size_t n) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
    acc1 = _mm256_add_ps(acc1, _mm256_loadu_ps(x + i + 8));
  }
  if (i + 8 <= n) {
    acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
    i += 8;
  }
  float r = hsum256(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) r += x[i];
  return r;
}

float sumsq_f(const float* x, size_t n) { return dot_f(x, x, n); }

// Register-blocked accumulating matrix product: 4 output rows x 16 columns
// held in ymm registers across the k loop, so each col tile load feeds four
// FMA rows. Leftover rows run one at a time, leftover columns 8-wide then
// scalar.
void gemm_acc_f(const float* w, size_t rs, size_t ks, const float* col, size_t m, size_t k,
                size_t p, float* out) {
  size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const float *w0 = w + i * rs, *w1 = w0 + rs, *w2 = w1 + rs, *w3 = w2 + rs;
    float *o0 = out + i * p, *o1 = o0 + p, *o2 = o1 + p, *o3 = o2 + p;
    size_t pc = 0;
    for (; pc + 16 <= p; pc += 16) {
      __m256 a00 = _mm256_loadu_ps(o0 + pc), a01 = _mm256_loadu_ps(o0 + pc + 8);
      __m256 a10 = _mm256_loadu_ps(o1 + pc), a11 = _mm256_loadu_ps(o1 + pc + 8);
      __m256 a20 = _mm256_loadu_ps(o2 + pc), a21 = _mm256_loadu_ps(o2 + pc + 8);
      __m256 a30 = _mm256_loadu_ps(o3 + pc), a31 = _mm256_loadu_ps(o3 + pc + 8);
      for (size_t j = 0; j < k; ++j) {
        const __m256 c0 = _mm256_loadu_ps(col + j * p + pc);
        const __m256 c1 = _mm256_loadu_ps(col + j * p + pc + 8);
        const size_t jk = j * ks;
        __m256 b = _mm256_set1_ps(w0[jk]);
        a00 = _mm256_fmadd_ps(b, c0, a00);
        a01 = _mm256_fmadd_ps(b, c1, a01);
        b = _mm256_set1_ps(w1[jk]);
        a10 = _mm256_fmadd_ps(b, c0, a10);
        a11 = _mm256_fmadd_ps(b, c1, a11);
        b = _mm256_set1_ps(w2[jk]);
        a20 = _mm256_fmadd_ps(b, c0, a20);
        a21 = _mm256_fmadd_ps(b, c1, a21);
        b = _mm256_set1_ps(w3[jk]);
        a30 = _mm256_fmadd_ps(b, c0, a30);
        a31 = _mm256_fmadd_ps(b, c1, a31);
      }
      _mm256_storeu_ps(o0 + pc, a00);
      _mm256_storeu_ps(o0 + pc + 8, a01);
      _mm256_storeu_ps(o1 + pc, a10);
      _mm256_storeu_ps(o1 + pc + 8, a11);
      _mm256_storeu_ps(o2 + pc, a20);
      _mm256_storeu_ps(o2 + pc + 8, a21);
      _mm256_storeu_ps(o3 + pc, a30);
      _mm256_storeu_ps(o3 + pc + 8, a31);
    }
    for (; pc + 8 <= p; pc += 8) {
      __m256 a0 = _mm256_loadu_ps(o0 + pc), a1 = _mm256_loadu_ps(o1 + pc);
      __m256 a2 = _mm256_loadu_ps(o2 + pc), a3 = _mm256_loadu_ps(o3 + pc);
      for (size_t j = 0; j < k; ++j) {
        const __m256 c0 = _mm256_loadu_ps(col + j * p + pc);
        const size_t jk = j * ks;
        a0 = _mm256_fmadd_ps(_mm256_set1_ps(w0[jk]), c0, a0);
        a1 = _mm256_fmadd_ps(_mm256_set1_ps(w1[jk]), c0, a1);
        a2 = _mm256_fmadd_ps(_mm256_set1_ps(w2[jk]), c0, a2);
        a3 = _mm256_fmadd_ps(_mm256_set1_ps(w3[jk]), c0, a3);
      }
      _mm256_storeu_ps(o0 + pc, a0);
      _mm256_storeu_ps(o1 + pc, a1);
      _mm256_storeu_ps(o2 + pc, a2);
      _mm256_storeu_ps(o3 + pc, a3);
    }
    if (pc < p) {
      for (size_t r = 0; r < 4; ++r) {
        const float* wr = w + (i + r) * rs;
        float* orow = out + (i + r) * p;
        for (size_t x = pc; x < p; ++x) {
          float acc = orow[x];
          for (size_t j = 0; j < k; ++j) acc += wr[j * ks] * col[j * p + x];
          orow[x] = acc;
        }
      }
    }
  }
  for (; i < m; ++i) {
    const float* wr = w + i * rs;
    float* orow = out + i * p;
    size_t pc = 0;
    for (; pc + 8 <= p; pc += 8) {
      __m256 a0 = _mm256_loadu_ps(orow + pc);
      for (size_t j = 0; j < k; ++j)
        a0 = _mm256_fmadd_ps(_mm256_set1_ps(wr[j * ks]), _mm256_loadu_ps(col + j * p + pc), a0);
      _mm256_storeu_ps(orow + pc, a0);
    }
    for (; pc < p; ++pc) {
      float acc = orow[pc];
      for (size_t j = 0; j < k; ++j) acc += wr[j * ks] * col[j * p + pc];
      orow[pc] = acc;
    }
  }
}

// ---- double ----

double dot_d(const double* a, const double* b, size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double r = hsum256d(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void axpy_d(double a, const double* x, double* y, size_t n) {
  __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  if (i + 4 <= n) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    i += 4;
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_d(double a, double* x, size_t n) {
  __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void vadd_d(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_d(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_d(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

double sum_d(const double* x, size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  if (i + 4 <= n) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    i += 4;
  }
  double r = hsum256d(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += x[i];
  return r;
}

double sumsq_d(const double* x, size_t n) { return dot_d(x, x, n); }

void gemm_acc_d(const double* w, size_t rs, size_t ks, const double* col, size_t m, size_t k,
                size_t p, double* out) {
  size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double *w0 = w + i * rs, *w1 = w0 + rs, *w2 = w1 + rs, *w3 = w2 + rs;
    double *o0 = out + i * p, *o1 = o0 + p, *o2 = o1 + p, *o3 = o2 + p;
    size_t pc = 0;
    for (; pc + 8 <= p; pc += 8) {
      __m256d a00 = _mm256_loadu_pd(o0 + pc), a01 = _mm256_loadu_pd(o0 + pc + 4);
      __m256d a10 = _mm256_loadu_pd(o1 + pc), a11 = _mm256_loadu_pd(o1 + pc + 4);
      __m256d a20 = _mm256_loadu_pd(o2 + pc), a21 = _mm256_loadu_pd(o2 + pc + 4);
      __m256d a30 = _mm256_loadu_pd(o3 + pc), a31 = _mm256_loadu_pd(o3 + pc + 4);
      for (size_t j = 0; j < k; ++j) {
        const __m256d c0 = _mm256_loadu_pd(col + j * p + pc);
        const __m256d c1 = _mm256_loadu_pd(col + j * p + pc + 4);
        const size_t jk = j * ks;
        __m256d b = _mm256_set1_pd(w0[jk]);
        a00 = _mm256_fmadd_pd(b, c0, a00);
        a01 = _mm256_fmadd_pd(b, c1, a01);
        b = _mm256_set1_pd(w1[jk]);
        a10 = _mm256_fmadd_pd(b, c0, a10);
        a11 = _mm256_fmadd_pd(b, c1, a11);
        b = _mm256_set1_pd(w2[jk]);
        a20 = _mm256_fmadd_pd(b, c0, a20);
        a21 = _mm256_fmadd_pd(b, c1, a21);
        b = _mm256_set1_pd(w3[jk]);
        a30 = _mm256_fmadd_pd(b, c0, a30);
        a31 = _mm256_fmadd_pd(b, c1, a31);
      }
      _mm256_storeu_pd(o0 + pc, a00);
      _mm256_storeu_pd(o0 + pc + 4, a01);
      _mm256_storeu_pd(o1 + pc, a10);
      _mm256_storeu_pd(o1 + pc + 4, a11);
      _mm256_storeu_pd(o2 + pc, a20);
      _mm256_storeu_pd(o2 + pc + 4, a21);
      _mm256_storeu_pd(o3 + pc, a30);
      _mm256_storeu_pd(o3 + pc + 4, a31);
    }
    if (pc < p) {
      for (size_t r = 0; r < 4; ++r) {
        const double* wr = w + (i + r) * rs;
        double* orow = out + (i + r) * p;
        for (size_t x = pc; x < p; ++x) {
          double acc = orow[x];
          for (size_t j = 0; j < k; ++j) acc += wr[j * ks] * col[j * p + x];
          orow[x] = acc;
        }
      }
    }
  }
  for (; i < m; ++i) {
    const double* wr = w + i * rs;
    double* orow = out + i * p;
    size_t pc = 0;
    for (; pc + 4 <= p; pc += 4) {
      __m256d a0 = _mm256_loadu_pd(orow + pc);
      for (size_t j = 0; j < k; ++j)
        a0 = _mm256_fmadd_pd(_mm256_set1_pd(wr[j * ks]), _mm256_loadu_pd(col + j * p + pc), a0);
      _mm256_storeu_pd(orow + pc, a0);
    }
    for (; pc < p; ++pc) {
      double acc = orow[pc];
      for (size_t j = 0; j < k; ++j) acc += wr[j * ks] * col[j * p + pc];
      orow[pc] = acc;
    }
  }
}

}  // namespace

template <>
const Table<float>& avx2_table<float>() {
  static const Table<float> t = {dot_f, axpy_f, scale_f, vadd_f,  vsub_f,
                                 vmul_f, sum_f, sumsq_f, gemm_acc_f};
  return t;
}

template <>
const Table<double>& avx2_table<double>() {
  static const Table<double> t = {dot_d, axpy_d, scale_d, vadd_d,  vsub_d,
                                  vmul_d, sum_d, sumsq_d, gemm_acc_d};
  return t;
}

}  // namespace edcflow::kern

#endif  // EDCFLOW_HAVE_AVX2_TU
