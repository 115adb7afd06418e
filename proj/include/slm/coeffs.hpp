#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace slm {

// Cap of the numerical domain on which coefficient assumptions are probed.
// Asymptotic (x -> infinity) conditions are decided from grid evidence up to
// this cap.
inline constexpr double kXMax = 1e6;

struct CoefficientEvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A scalar coefficient function on [0, kXMax] with named parameters.
// `deriv` is optional; when present it unlocks the Milstein scheme for the
// volatility equation.
struct CoefficientFunction {
  std::string name;
  std::vector<std::pair<std::string, double>> params;
  std::function<double(double)> eval;
  std::function<double(double)> deriv;  // may be empty
  // volatility-diffusion functions must satisfy eval(0) = 0, eval(x) > 0 on x > 0
  bool volatility_diffusion = false;

  double operator()(double x) const { return eval(x); }
  bool has_deriv() const { return static_cast<bool>(deriv); }

  double param(const std::string& key) const;
};

namespace coeff {

CoefficientFunction zero();
CoefficientFunction constant(double c);
// c * x, flagged as volatility diffusion when c > 0
CoefficientFunction linear(double c);
// c * x^p
CoefficientFunction power(double c, double p);
// min(c * x, cap)
CoefficientFunction capped_linear(double c, double cap);
// x - rho * x^(k+1)
CoefficientFunction lm_drift(double rho, double k);
// K * ln(x) - c * x^p        (singular at 0)
CoefficientFunction log_minus_power(double K, double c, double p);
// K * sin(x) - c * x^p
CoefficientFunction sin_minus_power(double K, double c, double p);
// K * exp(-a x) - c * x^p
CoefficientFunction exp_minus_power(double K, double a, double c, double p);
// K * x^m - c * x^p
CoefficientFunction pow_minus_power(double K, double m, double c, double p);
// piecewise-linear interpolation of tabulated (x, y) pairs
CoefficientFunction table(std::vector<double> xs, std::vector<double> ys);

// Build a registered family by name from key/value parameters. Throws
// std::invalid_argument on unknown names or missing parameters.
CoefficientFunction make(const std::string& family,
                         const std::vector<std::pair<std::string, double>>& params);

}  // namespace coeff

enum class ModelFamily { basic, power };

// The coupled (S, v) model: dS = sigma_S(S, v) dB, dv = mu(v) dW + b(v) dt,
// with corr(B, W) = rho. The basic family has sigma_S = S v; the power family
// has sigma_S = S^beta v^delta and mu(x) = alpha x^gamma.
struct VolatilityModelSpec {
  CoefficientFunction mu;
  CoefficientFunction b;
  double rho = 0.0;
  ModelFamily family = ModelFamily::basic;
  double alpha = 0.0, beta = 0.0, gamma = 0.0, delta = 0.0;
  double S0 = 1.0;
  double v0 = 1.0;
  double T = 1.0;

  // diffusion coefficient of S at state (S, v)
  double s_sigma(double S, double v) const;
  // sigma_S / S: the per-unit log volatility of S
  double s_logvol(double S, double v) const;

  static VolatilityModelSpec basic(CoefficientFunction mu, CoefficientFunction b,
                                   double rho, double S0 = 1.0, double v0 = 1.0,
                                   double T = 1.0);
};

// phi in the integral condition: positive, nondecreasing on [a, infinity).
// Monotonicity and positivity are probed on a geometric grid at construction.
struct PhiFunction {
  double a = 1.0;
  std::function<double(double)> eval;

  double operator()(double x) const { return eval(x); }

  static PhiFunction power(double p, double a = 1.0);
  static PhiFunction from(double a, std::function<double(double)> f,
                          bool check_monotone = true);
};

enum class CheckStatus { pass, fail, skipped };

struct CoefficientCheck {
  std::string name;
  CheckStatus status = CheckStatus::pass;
  std::optional<double> witness_x;  // grid point exhibiting the failure
  std::string detail;
};

struct CoefficientValidationReport {
  std::vector<CoefficientCheck> checks;
  double fitted_growth_constant = 1.0;  // C in b(x) <= C (1 + x), reported >= 1
  double lipschitz_estimate = 0.0;      // max grid slope of mu (an estimate, not a proof)
  bool all_pass = true;                 // over non-skipped checks

  const CoefficientCheck* find(const std::string& name) const;
};

// Probes the standing assumptions {mu(0)=0, b(0)>=0, mu>0 on x>0, linear
// growth of b, grid Lipschitz estimate for mu} on the supplied grid.
// Grid must be nonempty, sorted, inside [0, kXMax].
CoefficientValidationReport validate_coefficients(const VolatilityModelSpec& spec,
                                                  const std::vector<double>& grid);

// Power-family constructor: mu(x) = alpha x^gamma, S-diffusion S^beta v^delta.
VolatilityModelSpec make_power_family(double alpha, double beta, double gamma,
                                      double delta, CoefficientFunction b, double rho,
                                      double S0 = 1.0, double v0 = 1.0, double T = 1.0);

// Default validation grid: {0} followed by a geometric sweep up to x_max.
std::vector<double> default_validation_grid(double x_max = kXMax);

}  // namespace slm
