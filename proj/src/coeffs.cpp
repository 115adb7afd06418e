#include "slm/coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slm {

double CoefficientFunction::param(const std::string& key) const {
  for (const auto& [k, v] : params)
    if (k == key) return v;
  throw std::invalid_argument("coefficient '" + name + "' has no parameter '" + key + "'");
}

namespace coeff {

namespace {

CoefficientFunction make_fn(std::string name,
                            std::vector<std::pair<std::string, double>> params,
                            std::function<double(double)> f,
                            std::function<double(double)> df, bool vol_flag) {
  CoefficientFunction c;
  c.name = std::move(name);
  c.params = std::move(params);
  c.eval = std::move(f);
  c.deriv = std::move(df);
  c.volatility_diffusion = vol_flag;
  return c;
}

}  // namespace

CoefficientFunction zero() {
  return make_fn("zero", {}, [](double) { return 0.0; }, [](double) { return 0.0; }, false);
}

CoefficientFunction constant(double c) {
  return make_fn("constant", {{"c", c}}, [c](double) { return c; },
                 [](double) { return 0.0; }, false);
}

CoefficientFunction linear(double c) {
  return make_fn("linear", {{"c", c}}, [c](double x) { return c * x; },
                 [c](double) { return c; }, c > 0.0);
}

CoefficientFunction power(double c, double p) {
  if (p < 0.0)
    return make_fn("power", {{"c", c}, {"p", p}},
                   [c, p](double x) { return c * std::pow(x, p); },
                   [c, p](double x) { return c * p * std::pow(x, p - 1.0); }, false);
  return make_fn("power", {{"c", c}, {"p", p}},
                 [c, p](double x) { return x == 0.0 ? 0.0 : c * std::pow(x, p); },
                 [c, p](double x) { return c * p * std::pow(x, p - 1.0); },
                 c > 0.0 && p > 0.0);
}

CoefficientFunction capped_linear(double c, double cap) {
  return make_fn("capped_linear", {{"c", c}, {"cap", cap}},
                 [c, cap](double x) { return std::min(c * x, cap); },
                 [c, cap](double x) { return c * x < cap ? c : 0.0; }, c > 0.0 && cap > 0.0);
}

CoefficientFunction lm_drift(double rho, double k) {
  return make_fn("lm_drift", {{"rho", rho}, {"k", k}},
                 [rho, k](double x) { return x - rho * std::pow(x, k + 1.0); },
                 [rho, k](double x) { return 1.0 - rho * (k + 1.0) * std::pow(x, k); },
                 false);
}

CoefficientFunction log_minus_power(double K, double c, double p) {
  return make_fn("log_minus_power", {{"K", K}, {"c", c}, {"p", p}},
                 [K, c, p](double x) { return K * std::log(x) - c * std::pow(x, p); },
                 [K, c, p](double x) { return K / x - c * p * std::pow(x, p - 1.0); },
                 false);
}

CoefficientFunction sin_minus_power(double K, double c, double p) {
  return make_fn("sin_minus_power", {{"K", K}, {"c", c}, {"p", p}},
                 [K, c, p](double x) { return K * std::sin(x) - c * std::pow(x, p); },
                 [K, c, p](double x) { return K * std::cos(x) - c * p * std::pow(x, p - 1.0); },
                 false);
}

CoefficientFunction exp_minus_power(double K, double a, double c, double p) {
  return make_fn("exp_minus_power", {{"K", K}, {"a", a}, {"c", c}, {"p", p}},
                 [K, a, c, p](double x) { return K * std::exp(-a * x) - c * std::pow(x, p); },
                 [K, a, c, p](double x) {
                   return -a * K * std::exp(-a * x) - c * p * std::pow(x, p - 1.0);
                 },
                 false);
}

CoefficientFunction pow_minus_power(double K, double m, double c, double p) {
  return make_fn("pow_minus_power", {{"K", K}, {"m", m}, {"c", c}, {"p", p}},
                 [K, m, c, p](double x) {
                   const double lead = (m == 0.0) ? K : K * std::pow(x, m);
                   return lead - c * std::pow(x, p);
                 },
                 [K, m, c, p](double x) {
                   return K * m * std::pow(x, m - 1.0) - c * p * std::pow(x, p - 1.0);
                 },
                 false);
}

CoefficientFunction table(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("table coefficient needs >= 2 aligned (x, y) pairs");
  if (!std::is_sorted(xs.begin(), xs.end()))
    throw std::invalid_argument("table coefficient x values must be sorted");
  auto f = [xs = std::move(xs), ys = std::move(ys)](double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const size_t i = (size_t)(it - xs.begin());
    const double w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return ys[i - 1] + w * (ys[i] - ys[i - 1]);
  };
  CoefficientFunction c;
  c.name = "table";
  c.eval = std::move(f);
  return c;
}

CoefficientFunction make(const std::string& family,
                         const std::vector<std::pair<std::string, double>>& params) {
  auto get = [&](const std::string& key, std::optional<double> fallback =
                                             std::nullopt) -> double {
    for (const auto& [k, v] : params)
      if (k == key) return v;
    if (fallback) return *fallback;
    throw std::invalid_argument("coefficient family '" + family +
                                "' requires parameter '" + key + "'");
  };
  if (family == "zero") return zero();
  if (family == "constant") return constant(get("c"));
  if (family == "linear") return linear(get("c", 1.0));
  if (family == "power") return power(get("c", 1.0), get("p"));
  if (family == "capped_linear") return capped_linear(get("c", 1.0), get("cap"));
  if (family == "lm_drift") return lm_drift(get("rho"), get("k", 1.0));
  if (family == "log_minus_power")
    return log_minus_power(get("K"), get("c"), get("p"));
  if (family == "sin_minus_power")
    return sin_minus_power(get("K"), get("c"), get("p"));
  if (family == "exp_minus_power")
    return exp_minus_power(get("K"), get("a"), get("c"), get("p"));
  if (family == "pow_minus_power")
    return pow_minus_power(get("K"), get("m"), get("c"), get("p"));
  throw std::invalid_argument("unknown coefficient family '" + family + "'");
}

}  // namespace coeff

double VolatilityModelSpec::s_sigma(double S, double v) const {
  if (family == ModelFamily::basic) return S * v;
  return std::pow(S, beta) * std::pow(v, delta);
}

double VolatilityModelSpec::s_logvol(double S, double v) const {
  if (family == ModelFamily::basic) return v;
  return std::pow(S, beta - 1.0) * std::pow(v, delta);
}

VolatilityModelSpec VolatilityModelSpec::basic(CoefficientFunction mu,
                                               CoefficientFunction b, double rho,
                                               double S0, double v0, double T) {
  if (!(S0 > 0.0)) throw std::invalid_argument("model: S0 must be > 0");
  if (!(v0 > 0.0)) throw std::invalid_argument("model: v0 must be > 0");
  if (!(T > 0.0)) throw std::invalid_argument("model: T must be > 0");
  if (!(rho >= -1.0 && rho <= 1.0))
    throw std::invalid_argument("model: rho must lie in [-1, 1]");
  VolatilityModelSpec spec;
  spec.mu = std::move(mu);
  spec.b = std::move(b);
  spec.rho = rho;
  spec.family = ModelFamily::basic;
  spec.S0 = S0;
  spec.v0 = v0;
  spec.T = T;
  return spec;
}

VolatilityModelSpec make_power_family(double alpha, double beta, double gamma,
                                      double delta, CoefficientFunction b, double rho,
                                      double S0, double v0, double T) {
  if (!(alpha > 0.0 && beta > 0.0 && gamma > 0.0 && delta > 0.0))
    throw std::invalid_argument("power family: alpha, beta, gamma, delta must all be > 0");
  VolatilityModelSpec spec = VolatilityModelSpec::basic(
      coeff::power(alpha, gamma), std::move(b), rho, S0, v0, T);
  spec.family = ModelFamily::power;
  spec.alpha = alpha;
  spec.beta = beta;
  spec.gamma = gamma;
  spec.delta = delta;
  return spec;
}

PhiFunction PhiFunction::power(double p, double a) {
  if (!(a > 0.0)) throw std::invalid_argument("phi: lower limit a must be > 0");
  if (!(p > 0.0)) throw std::invalid_argument("phi: exponent must be > 0");
  PhiFunction phi;
  phi.a = a;
  phi.eval = [p](double x) { return std::pow(x, p); };
  return phi;
}

PhiFunction PhiFunction::from(double a, std::function<double(double)> f,
                              bool check_monotone) {
  if (!(a > 0.0)) throw std::invalid_argument("phi: lower limit a must be > 0");
  PhiFunction phi;
  phi.a = a;
  phi.eval = std::move(f);
  if (check_monotone) {
    double prev = phi.eval(a);
    if (!(prev > 0.0)) throw std::invalid_argument("phi: must be positive at a");
    for (double x = a; x <= kXMax; x *= 1.5) {
      const double y = phi.eval(x);
      if (!std::isfinite(y) || y <= 0.0)
        throw std::invalid_argument("phi: must be positive and finite on [a, X_MAX]");
      if (y < prev * (1.0 - 1e-12))
        throw std::invalid_argument("phi: must be nondecreasing on [a, X_MAX]");
      prev = y;
    }
  }
  return phi;
}

const CoefficientCheck* CoefficientValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

// Least-squares slope of y against log10(x) over the points with x in
// [x_max / 100, x_max], split into the two closing decades. Returns false if
// either decade has fewer than two points.
struct TailTrend {
  double slope_lo = 0.0, slope_hi = 0.0;  // per-decade slopes
  double scale = 1.0;                     // typical |y| on the tail
  bool ok = false;
};

double ls_slope(const std::vector<double>& lx, const std::vector<double>& y) {
  const size_t n = lx.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += y[i];
  }
  mx /= (double)n;
  my /= (double)n;
  double num = 0, den = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (lx[i] - mx) * (y[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return den > 0 ? num / den : 0.0;
}

TailTrend tail_trend(const std::vector<double>& xs, const std::vector<double>& ys) {
  TailTrend t;
  if (xs.empty()) return t;
  const double x_max = xs.back();
  std::vector<double> lx1, y1, lx2, y2;
  double scale = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] <= 0.0 || xs[i] < x_max / 100.0) continue;
    scale = std::max(scale, std::abs(ys[i]));
    if (xs[i] < x_max / 10.0) {
      lx1.push_back(std::log10(xs[i]));
      y1.push_back(ys[i]);
    } else {
      lx2.push_back(std::log10(xs[i]));
      y2.push_back(ys[i]);
    }
  }
  if (lx1.size() < 2 || lx2.size() < 2) return t;
  t.slope_lo = ls_slope(lx1, y1);
  t.slope_hi = ls_slope(lx2, y2);
  t.scale = std::max(scale, 1e-300);
  t.ok = true;
  return t;
}

// sign of a per-decade slope with a dead band relative to the value scale
int slope_sign(double slope, double scale) {
  const double band = 0.02 * std::max(1.0, scale);
  if (slope > band) return 1;
  if (slope < -band) return -1;
  return 0;
}

}  // namespace

CoefficientValidationReport validate_coefficients(const VolatilityModelSpec& spec,
                                                  const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("validate_coefficients: grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw std::invalid_argument("validate_coefficients: grid must be sorted");
  if (grid.front() < 0.0 || grid.back() > kXMax)
    throw std::invalid_argument("validate_coefficients: grid must lie inside [0, X_MAX]");

  auto eval_checked = [](const CoefficientFunction& f, double x) {
    const double y = f.eval(x);
    if (!std::isfinite(y)) {
      std::ostringstream os;
      os << "coefficient evaluation error: " << f.name << "(" << x << ") is not finite";
      throw CoefficientEvalError(os.str());
    }
    return y;
  };

  std::vector<double> mu_vals(grid.size()), b_vals(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    mu_vals[i] = eval_checked(spec.mu, grid[i]);
    b_vals[i] = eval_checked(spec.b, grid[i]);
  }

  CoefficientValidationReport rep;
  auto add = [&rep](CoefficientCheck c) {
    if (c.status == CheckStatus::fail) rep.all_pass = false;
    rep.checks.push_back(std::move(c));
  };

  // mu(0) = 0
  {
    CoefficientCheck c;
    c.name = "mu_at_zero";
    const double m0 = spec.mu.eval(0.0);
    if (!std::isfinite(m0)) {
      c.status = CheckStatus::fail;
      c.witness_x = 0.0;
      c.detail = "mu(0) is not finite";
    } else if (std::abs(m0) > 1e-12) {
      c.status = CheckStatus::fail;
      c.witness_x = 0.0;
      c.detail = "mu(0) != 0";
    }
    add(std::move(c));
  }

  // b(0) >= 0; skipped when b is singular at the origin (logarithmic families)
  {
    CoefficientCheck c;
    c.name = "b_at_zero";
    const double b0 = spec.b.eval(0.0);
    if (!std::isfinite(b0)) {
      c.status = CheckStatus::skipped;
      c.detail = "b(0) not finite; assumption assessed on x > 0 only";
    } else if (b0 < -1e-12) {
      c.status = CheckStatus::fail;
      c.witness_x = 0.0;
      c.detail = "b(0) < 0";
    }
    add(std::move(c));
  }

  // mu(x) > 0 for grid x > 0
  {
    CoefficientCheck c;
    c.name = "mu_positive";
    for (size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] > 0.0 && !(mu_vals[i] > 0.0)) {
        c.status = CheckStatus::fail;
        c.witness_x = grid[i];
        c.detail = "mu <= 0 at a positive grid point";
        break;
      }
    }
    add(std::move(c));
  }

  // linear growth: b(x) <= C (1 + x) with bounded ratio on the closing decades
  {
    CoefficientCheck c;
    c.name = "b_linear_growth";
    std::vector<double> ratio(grid.size());
    double max_ratio = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
      ratio[i] = b_vals[i] / (1.0 + grid[i]);
      max_ratio = std::max(max_ratio, ratio[i]);
    }
    rep.fitted_growth_constant = std::max(1.0, max_ratio);
    const TailTrend t = tail_trend(grid, ratio);
    if (t.ok) {
      const int s1 = slope_sign(t.slope_lo, t.scale);
      const int s2 = slope_sign(t.slope_hi, t.scale);
      const bool flattening = t.slope_lo > 0.0 && t.slope_hi <= 0.5 * t.slope_lo;
      if (s1 > 0 && s2 > 0 && !flattening) {
        c.status = CheckStatus::fail;
        c.witness_x = grid.back();
        c.detail = "b(x)/(1+x) keeps growing over the last two grid decades";
      }
    }
    add(std::move(c));
  }

  // Lipschitz estimate for mu: largest grid slope, flagged if slopes grow
  // with x (an estimate from samples, not a proof). The power family only
  // assumes mu locally Lipschitz, so the growth trend is not flagged there.
  {
    CoefficientCheck c;
    c.name = "mu_lipschitz_estimate";
    std::vector<double> sx, slopes;
    double max_slope = 0.0;
    for (size_t i = 1; i < grid.size(); ++i) {
      const double dx = grid[i] - grid[i - 1];
      if (dx <= 0.0) continue;
      const double s = std::abs(mu_vals[i] - mu_vals[i - 1]) / dx;
      sx.push_back(grid[i]);
      slopes.push_back(s);
      max_slope = std::max(max_slope, s);
    }
    rep.lipschitz_estimate = max_slope;
    if (spec.family == ModelFamily::basic) {
      const TailTrend t = tail_trend(sx, slopes);
      if (t.ok) {
        const int s1 = slope_sign(t.slope_lo, t.scale);
        const int s2 = slope_sign(t.slope_hi, t.scale);
        if (s1 > 0 && s2 > 0) {
          c.status = CheckStatus::fail;
          c.witness_x = sx.back();
          c.detail = "grid slope of mu grows with x; global Lipschitz bound not supported";
        }
      }
    } else {
      c.detail = "local Lipschitz regime (power family)";
    }
    c.detail += (c.detail.empty() ? "" : "; ");
    c.detail += "estimate";
    add(std::move(c));
  }

  return rep;
}

std::vector<double> default_validation_grid(double x_max) {
  std::vector<double> g{0.0};
  const double lo = 1e-2;
  const int per_decade = 8;
  const double step = std::pow(10.0, 1.0 / per_decade);
  for (double x = lo; x <= x_max * (1.0 + 1e-12); x *= step) g.push_back(x);
  if (g.back() < x_max) g.push_back(x_max);
  return g;
}

}  // namespace slm
