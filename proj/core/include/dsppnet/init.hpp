#pragma once

#include <vector>

#include "dsppnet/random.hpp"
#include "dsppnet/tensor.hpp"

namespace dsppnet {

// Fan-in-scaled uniform init, U(-b, b) with b = sqrt(6 / fan_in).  Draws are
// consumed in row-major element order so initialization is a pure function
// of (shape, fan_in, rng state).
Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng);

}  // namespace dsppnet
