#pragma once

#include "ttdioc/simd.hpp"

namespace ttdioc::simd::detail {

const KernelTable& scalar_table() noexcept;

#if defined(TTDIOC_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif

}  // namespace ttdioc::simd::detail
