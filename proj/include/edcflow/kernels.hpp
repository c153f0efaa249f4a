#pragma once

#include <cstddef>

// Data-parallel inner loops behind the tensor operations. Scalar reference
// implementations always exist; an AVX2 variant is selected at runtime when
// the CPU supports it. Every entry point is equivalence-tested against the
// scalar reference. Reductions use a fixed summation order per ISA, so
// results are reproducible run-to-run on the same machine.
namespace edcflow::kern {

enum class Isa { scalar = 0, avx2 = 1 };

template <typename T>
struct Table {
  T (*dot)(const T* a, const T* b, size_t n);
  void (*axpy)(T a, const T* x, T* y, size_t n);    // y += a*x
  void (*scale)(T a, T* x, size_t n);               // x *= a
  void (*vadd)(const T* a, const T* b, T* out, size_t n);
  void (*vsub)(const T* a, const T* b, T* out, size_t n);
  void (*vmul)(const T* a, const T* b, T* out, size_t n);
  T (*sum)(const T* x, size_t n);
  T (*sumsq)(const T* x, size_t n);
  // out[i*p:(i+1)*p) += sum_j w[i*rs + j*ks] * col[j*p:(j+1)*p) for i < m
  void (*gemm_acc)(const T* w, size_t rs, size_t ks, const T* col, size_t m, size_t k, size_t p,
                   T* out);
};

bool supported(Isa isa);
Isa active_isa();
void set_isa(Isa isa);  // throws InvalidConfig when unsupported
const char* isa_name(Isa isa);

template <typename T>
const Table<T>& table_for(Isa isa);

template <typename T>
const Table<T>& table();  // table for the active ISA

template <typename T>
inline T dot(const T* a, const T* b, size_t n) {
  return table<T>().dot(a, b, n);
}
template <typename T>
inline void axpy(T a, const T* x, T* y, size_t n) {
  table<T>().axpy(a, x, y, n);
}
template <typename T>
inline void scale(T a, T* x, size_t n) {
  table<T>().scale(a, x, n);
}
template <typename T>
inline void vadd(const T* a, const T* b, T* out, size_t n) {
  table<T>().vadd(a, b, out, n);
}
template <typename T>
inline void vsub(const T* a, const T* b, T* out, size_t n) {
  table<T>().vsub(a, b, out, n);
}
template <typename T>
inline void vmul(const T* a, const T* b, T* out, size_t n) {
  table<T>().vmul(a, b, out, n);
}
template <typename T>
inline T sum(const T* x, size_t n) {
  return table<T>().sum(x, n);
}
template <typename T>
inline T sumsq(const T* x, size_t n) {
  return table<T>().sumsq(x, n);
}
template <typename T>
inline void gemm_acc(const T* w, size_t rs, size_t ks, const T* col, size_t m, size_t k, size_t p,
                     T* out) {
  table<T>().gemm_acc(w, rs, ks, col, m, k, p, out);
}

}  // namespace edcflow::kern
