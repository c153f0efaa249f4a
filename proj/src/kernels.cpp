#include "edcflow/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "edcflow/common.hpp"
#include "kernels_impl.hpp"

namespace edcflow::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && defined(EDCFLOW_HAVE_AVX2_TU)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect_default() {
  if (const char* env = std::getenv("EDCFLOW_ISA")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Isa::avx2;
    return Isa::scalar;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa> g_isa{detect_default()};

}  // namespace

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return cpu_has_avx2();
  }
  return false;
}

Isa active_isa() { return g_isa.load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  check(supported(isa), ErrorKind::InvalidConfig, "requested ISA not supported on this CPU");
  g_isa.store(isa, std::memory_order_relaxed);
}

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "?";
}

template <typename T>
const Table<T>& table_for(Isa isa) {
#ifdef EDCFLOW_HAVE_AVX2_TU
  if (isa == Isa::avx2) return avx2_table<T>();
#endif
  (void)isa;
  return scalar_table<T>();
}

template <typename T>
const Table<T>& table() {
  return table_for<T>(active_isa());
}

template const Table<float>& table_for<float>(Isa);
template const Table<double>& table_for<double>(Isa);
template const Table<float>& table<float>();
template const Table<double>& table<double>();

}  // namespace edcflow::kern
