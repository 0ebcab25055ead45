#include "dsppnet/init.hpp"

#include <cmath>
#include <stdexcept>

namespace dsppnet {

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  if (fan_in < 1) {
    throw std::invalid_argument("kaiming_uniform requires fan_in >= 1");
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.at(i) = rng.uniform(-bound, bound);
  }
  return t;
}

}  // namespace dsppnet
