#pragma once

#include "longreg/kernels.hpp"

namespace longreg::kernels::detail {

const Table& scalar_table();
#if defined(LONGREG_HAVE_AVX2)
const Table& avx2_table();
#endif

}  // namespace longreg::kernels::detail
