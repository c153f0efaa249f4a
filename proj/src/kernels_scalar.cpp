#include "kernels_impl.hpp"

namespace edcflow::kern {
namespace {

template <typename T>
T dot_s(const T* a, const T* b, size_t n) {
  T acc(0);
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_s(T a, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale_s(T a, T* x, size_t n) {
  for (size_t i = 0; i < n; ++i) x[i] *= a;
}

template <typename T>
void vadd_s(const T* a, const T* b, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void vsub_s(const T* a, const T* b, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void vmul_s(const T* a, const T* b, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
T sum_s(const T* x, size_t n) {
  T acc(0);
  for (size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T sumsq_s(const T* x, size_t n) {
  T acc(0);
  for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

template <typename T>
void gemm_acc_s(const T* w, size_t rs, size_t ks, const T* col, size_t m, size_t k, size_t p,
                T* out) {
  for (size_t i = 0; i < m; ++i) {
    T* dst = out + i * p;
    for (size_t j = 0; j < k; ++j) axpy_s(w[i * rs + j * ks], col + j * p, dst, p);
  }
}

template <typename T>
Table<T> make_table() {
  Table<T> t;
  t.dot = dot_s<T>;
  t.axpy = axpy_s<T>;
  t.scale = scale_s<T>;
  t.vadd = vadd_s<T>;
  t.vsub = vsub_s<T>;
  t.vmul = vmul_s<T>;
  t.sum = sum_s<T>;
  t.sumsq = sumsq_s<T>;
  t.gemm_acc = gemm_acc_s<T>;
  return t;
}

}  // namespace

template <>
const Table<float>& scalar_table<float>() {
  static const Table<float> t = make_table<float>();
  return t;
}

template <>
const Table<double>& scalar_table<double>() {
  static const Table<double> t = make_table<double>();
  return t;
}

}  // namespace edcflow::kern
