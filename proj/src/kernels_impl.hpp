#pragma once

#include "edcflow/kernels.hpp"

namespace edcflow::kern {

template <typename T>
const Table<T>& scalar_table();

#ifdef EDCFLOW_HAVE_AVX2_TU
template <typename T>
const Table<T>& avx2_table();
#endif

}  // namespace edcflow::kern
