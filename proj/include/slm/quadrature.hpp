#pragma once

#include <functional>

namespace slm {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;      // accumulated error estimate
  bool converged = true;   // false when the interval budget ran out
  bool finite = true;      // false when the integrand produced inf/nan
};

// Adaptive Gauss-Kronrod (G7, K15) on a finite interval.
QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     double rel_tol = 1e-10, double abs_tol = 1e-14,
                     int max_intervals = 4000);

struct ImproperResult {
  bool divergent = false;
  double value = 0.0;   // meaningful when !divergent
  double error = 0.0;
  double last_segment = 0.0;
  int segments_used = 0;
};

// Integrates f from `from` toward an open boundary (a finite limit, or +/-inf)
// by marching geometric segments. Divergence is declared when the running
// total crosses `divergence_cap` or the segment contributions fail to decay.
ImproperResult integrate_to_boundary(const std::function<double(double)>& f,
                                     double from, double boundary,
                                     double divergence_cap = 1e12,
                                     int max_segments = 64);

}  // namespace slm
