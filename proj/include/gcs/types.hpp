#pragma once

#include <complex>
#include <vector>

namespace gcs {

using cd = std::complex<double>;
using ComplexVec = std::vector<cd>;

}  // namespace gcs
