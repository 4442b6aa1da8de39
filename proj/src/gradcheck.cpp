#include "dmh/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dmh/rng.hpp"

namespace dmh {

double finite_difference_check(const GradCheckTarget& target, const Tensor& point,
                               double h, std::size_t max_coords, std::uint64_t seed) {
  const std::size_t n = point.size();
  std::vector<std::size_t> coords(n);
  for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  if (max_coords > 0 && max_coords < n) {
    Rng rng(seed);
    shuffle_indices(coords, rng);
    coords.resize(max_coords);
  }

  Tensor analytic = target.analytic_grad(point);
  if (analytic.size() != n) {
    throw DimensionError("finite_difference_check: analytic gradient size mismatch");
  }

  Tensor probe = point;
  double worst = 0.0;
  for (std::size_t idx : coords) {
    const double orig = probe[idx];
    probe[idx] = orig + h;
    const double fp = target.f(probe);
    probe[idx] = orig - h;
    const double fm = target.f(probe);
    probe[idx] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::fabs(analytic[idx] - numeric) / std::max(1.0, std::fabs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dmh
