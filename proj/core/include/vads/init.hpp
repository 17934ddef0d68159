#pragma once

#include <cmath>
#include <cstdint>

#include "vads/rng.hpp"
#include "vads/tensor.hpp"

namespace vads {

inline Tensor normal_init(Shape shape, double stddev, std::uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape));
  Rng rng(seed);
  for (double& v : t.values) v = rng.normal(0.0, stddev);
  return t;
}

/// Weight init for a dense layer feeding a linear or sigmoid unit.
inline Tensor xavier_init(Shape shape, std::size_t fan_in, std::uint64_t seed) {
  return normal_init(std::move(shape), std::sqrt(1.0 / static_cast<double>(fan_in)), seed);
}

/// Weight init for a layer followed by relu.
inline Tensor he_init(Shape shape, std::size_t fan_in, std::uint64_t seed) {
  return normal_init(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), seed);
}

}  // namespace vads
