#pragma once

#include <algorithm>
#include <cmath>

#include "varconet/error.hpp"

namespace varconet {

// The floor keeps identically-zero gradients (for example key biases under
// softmax shift invariance) from dividing central-difference round-off,
// about 1e-10 at h = 1e-5, by a vanishing denominator.
inline constexpr double kRelativeErrorFloor = 1e-5;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(kRelativeErrorFloor, std::abs(analytic) + std::abs(numeric));
}

template <typename F>
double finite_diff_check(F&& f, Vector point, const Vector& analytic, double h) {
  if (analytic.size() != point.size()) {
    throw InvariantError("finite_diff_check: gradient has " + std::to_string(analytic.size()) +
                         " entries for a point of " + std::to_string(point.size()));
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

}  // namespace varconet
