#pragma once

#include "gatevio/kernels.hpp"

namespace gatevio::kernels::detail {

// Intrinsics are packed as [fx, fy, cx, cy, k1, k2, p1, p2]; rotations as
// 9 doubles row-major.

const KernelTable& scalar_table();
#if defined(GATEVIO_WITH_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace gatevio::kernels::detail
