#pragma once

#include <algorithm>
#include <cmath>

namespace accord::testing {

/// Golden-section minimiser of h(w) = -log w + lambda w + (w - y)^2 / (2 tau)
/// on w > 0. Points are compared through h(c) - h(d) written out in closed
/// form, so the search is not limited by cancellation in h itself.
inline double golden_prox(double y, double tau, double lambda) {
  auto diff = [&](double c, double d) {
    return -std::log1p((c - d) / d) + (c - d) * (lambda + (c + d - 2.0 * y) / (2.0 * tau));
  };
  double a = 0.0, b = 1.0;
  while (diff(b, 0.5 * b) < 0.0) b *= 2.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  for (int it = 0; it < 500; ++it) {
    if (diff(c, d) < 0.0) {
      b = d;
      d = c;
      c = b - g * (b - a);
    } else {
      a = c;
      c = d;
      d = a + g * (b - a);
    }
    if (b - a <= 4e-16 * b) break;
  }
  return 0.5 * (a + b);
}

}  // namespace accord::testing
