#pragma once

#include <cstdint>
#include <functional>

#include "dmh/tensor.hpp"

namespace dmh {

/// f maps a flat coordinate vector to a scalar; analytic must fill `grad`
/// with d f / d point at the same coordinates.
struct GradCheckTarget {
  std::function<double(const Tensor& point)> f;
  std::function<Tensor(const Tensor& point)> analytic_grad;
};

/// Max over coordinates of |analytic - numeric| / max(1, |numeric|) using
/// central differences with step h. With max_coords > 0 and fewer evaluation
/// slots than coordinates, a seeded random subset of coordinates is checked
/// (full sweeps over wide layers are too slow to be useful).
double finite_difference_check(const GradCheckTarget& target, const Tensor& point,
                               double h = 1e-5, std::size_t max_coords = 0,
                               std::uint64_t seed = 0);

}  // namespace dmh
