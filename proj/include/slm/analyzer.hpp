#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "slm/coeffs.hpp"

namespace slm {

enum class Verdict { satisfied, violated, inconclusive };

std::string to_string(Verdict v);

struct TrendPoint {
  double x;
  double value;
};

// Numerical answer to a limsup/liminf question, decided from the closing two
// decades of a geometric grid. `inconclusive` is returned when the two decades
// disagree on the sign of the trend or when evaluation overflowed.
struct AsymptoticVerdict {
  std::string quantity;
  std::vector<TrendPoint> trend_values;
  Verdict verdict = Verdict::inconclusive;
  std::string extrapolation_note;
};

// Geometric evaluation grid; must span at least six decades for the
// asymptotic checks.
std::vector<double> geometric_grid(double lo = 1.0, double hi = kXMax,
                                   int points_per_decade = 16);

// limsup_{x->inf} (rho x mu(x) + b(x)) / x < inf  => martingale regime
AsymptoticVerdict lm_martingale_check(const VolatilityModelSpec& spec,
                                      const std::vector<double>& grid);

// liminf_{x->inf} (rho x mu(x) + b(x) + min(e1,e2) mu^2(x) - max(e1,e2) mu(x))
//                  / phi(x) > 0  => strict local martingale regime
AsymptoticVerdict lm_strict_check(const VolatilityModelSpec& spec,
                                  const PhiFunction& phi, double eps1, double eps2,
                                  const std::vector<double>& grid);

struct PhiIntegrability {
  enum class Kind { integrable, divergent, inconclusive } kind;
  double value = 0.0;          // of the integral of 1/phi over [a, inf)
  double error = 0.0;
  double tail_exponent = 0.0;  // fitted p in phi ~ C x^p at the grid cap
  std::string note;
};

// Decides whether the integral of 1/phi over [a, inf) converges: adaptive
// quadrature to the grid cap plus a power-law tail extrapolation; integrable
// iff the fitted tail exponent exceeds 1.
PhiIntegrability phi_integrability(const PhiFunction& phi, double x_max = kXMax);

struct ScaleSingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BoundaryEval { finite, divergent };

struct ScaleFunctionResult {
  BoundaryEval p_at_upper = BoundaryEval::divergent;
  BoundaryEval p_at_lower = BoundaryEval::divergent;
  std::optional<double> p_upper_value;  // present when finite
  std::optional<double> p_lower_value;
  enum class Classification { NoExplosion, PossibleExplosion } classification =
      Classification::PossibleExplosion;
  double quadrature_error_estimate = 0.0;
};

inline constexpr double kDivergenceCap = 1e12;

// Scale function p(x) = int_c^x exp(-2 int_c^psi b/mu^2 dy) dpsi, evaluated at
// both boundaries of the state interval. NoExplosion iff both limits diverge.
// Throws ScaleSingularityError when mu vanishes strictly inside the domain.
ScaleFunctionResult feller_scale_classify(const CoefficientFunction& mu,
                                          const CoefficientFunction& b, double c,
                                          double lower, double upper,
                                          double divergence_cap = kDivergenceCap);

// Model-spec overload; the state space defaults to (0, inf) for volatility
// models, with the full line available via the explicit bounds.
ScaleFunctionResult feller_scale_classify(const VolatilityModelSpec& spec, double c,
                                          double lower = 0.0,
                                          double upper = std::numeric_limits<double>::infinity(),
                                          double divergence_cap = kDivergenceCap);

struct PowerFamilyVerdicts {
  AsymptoticVerdict martingale;  // limsup condition
  AsymptoticVerdict strict;      // liminf condition
};

// Power-family conditions. Requires rho > 0 and gamma + delta > 1; rejects
// other parameter sets.
PowerFamilyVerdicts power_family_condition_check(const VolatilityModelSpec& spec,
                                          const PhiFunction& phi, double eps1,
                                          double eps2, const std::vector<double>& grid);

}  // namespace slm
