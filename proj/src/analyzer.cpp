#include "slm/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "slm/quadrature.hpp"

namespace slm {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::satisfied: return "satisfied";
    case Verdict::violated: return "violated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

std::vector<double> geometric_grid(double lo, double hi, int points_per_decade) {
  if (!(lo > 0.0) || !(hi > lo))
    throw std::invalid_argument("geometric_grid: need 0 < lo < hi");
  std::vector<double> g;
  const double step = std::pow(10.0, 1.0 / points_per_decade);
  for (double x = lo; x <= hi * (1.0 + 1e-12); x *= step) g.push_back(x);
  if (g.back() < hi) g.push_back(hi);
  return g;
}

namespace {

void require_decades(const std::vector<double>& grid, int min_decades) {
  if (grid.size() < 4 || grid.front() <= 0.0)
    throw std::invalid_argument("asymptotic check: grid must be positive with >= 4 points");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw std::invalid_argument("asymptotic check: grid must be sorted");
  const double decades = std::log10(grid.back() / grid.front());
  if (decades < min_decades - 1e-9) {
    std::ostringstream os;
    os << "asymptotic check: grid spans " << decades << " decades, needs >= "
       << min_decades;
    throw std::invalid_argument(os.str());
  }
}

struct DecadeFit {
  double slope = 0.0;   // value change per decade
  double mean = 0.0;
  size_t n = 0;
};

DecadeFit fit_decade(const std::vector<TrendPoint>& pts, double x_lo, double x_hi) {
  DecadeFit f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : pts) {
    if (p.x < x_lo || p.x > x_hi) continue;
    const double lx = std::log10(p.x);
    sx += lx;
    sy += p.value;
    sxx += lx * lx;
    sxy += lx * p.value;
    ++f.n;
  }
  if (f.n < 2) return f;
  const double den = f.n * sxx - sx * sx;
  f.slope = den != 0.0 ? (f.n * sxy - sx * sy) / den : 0.0;
  f.mean = sy / (double)f.n;
  return f;
}

int trend_sign(const DecadeFit& f) {
  const double band = 0.02 * std::max(1.0, std::abs(f.mean));
  if (f.slope > band) return 1;
  if (f.slope < -band) return -1;
  return 0;
}

struct TailAnalysis {
  DecadeFit lo, hi;
  bool ok = false;
};

TailAnalysis analyze_tail(const std::vector<TrendPoint>& pts) {
  TailAnalysis t;
  if (pts.empty()) return t;
  const double x_max = pts.back().x;
  t.lo = fit_decade(pts, x_max / 100.0, x_max / 10.0);
  t.hi = fit_decade(pts, x_max / 10.0, x_max * (1.0 + 1e-12));
  t.ok = t.lo.n >= 2 && t.hi.n >= 2;
  return t;
}

// growth that loses more than half its per-decade slope is treated as a
// bounded approach to a finite limit (x/(1+x)-type ratios)
bool flattening_growth(const TailAnalysis& t) {
  return t.lo.slope > 0.0 && t.hi.slope > 0.0 && t.hi.slope <= 0.5 * t.lo.slope;
}

}  // namespace

AsymptoticVerdict lm_martingale_check(const VolatilityModelSpec& spec,
                                      const std::vector<double>& grid) {
  require_decades(grid, 6);
  AsymptoticVerdict out;
  out.quantity = "(rho*x*mu(x)+b(x))/x";
  for (double x : grid) {
    const double q = (spec.rho * x * spec.mu(x) + spec.b(x)) / x;
    if (!std::isfinite(q)) {
      out.verdict = Verdict::inconclusive;
      out.extrapolation_note = "evaluation overflowed at x=" + std::to_string(x);
      return out;
    }
    out.trend_values.push_back({x, q});
  }
  const TailAnalysis t = analyze_tail(out.trend_values);
  if (!t.ok) {
    out.verdict = Verdict::inconclusive;
    out.extrapolation_note = "too few points in the closing decades";
    return out;
  }
  const int s1 = trend_sign(t.lo), s2 = trend_sign(t.hi);
  if (s1 * s2 < 0) {
    out.verdict = Verdict::inconclusive;
    out.extrapolation_note = "closing decades disagree on the trend sign";
    return out;
  }
  if (s1 <= 0 && s2 <= 0) {
    out.verdict = Verdict::satisfied;
    out.extrapolation_note = "quantity flat or decreasing toward the cap";
  } else if (flattening_growth(t)) {
    out.verdict = Verdict::satisfied;
    out.extrapolation_note = "growth flattens across the closing decades (bounded approach)";
  } else {
    out.verdict = Verdict::violated;
    out.extrapolation_note = "quantity grows through the closing decades";
  }
  return out;
}

namespace {

AsymptoticVerdict liminf_positive_verdict(std::string quantity,
                                          std::vector<TrendPoint> values,
                                          std::string overflow_note) {
  AsymptoticVerdict out;
  out.quantity = std::move(quantity);
  out.trend_values = std::move(values);
  if (!overflow_note.empty()) {
    out.verdict = Verdict::inconclusive;
    out.extrapolation_note = std::move(overflow_note);
    return out;
  }
  const TailAnalysis t = analyze_tail(out.trend_values);
  if (!t.ok) {
    out.verdict = Verdict::inconclusive;
    out.extrapolation_note = "too few points in the closing decades";
    return out;
  }
  const int s1 = trend_sign(t.lo), s2 = trend_sign(t.hi);
  if (s1 * s2 < 0) {
    out.verdict = Verdict::inconclusive;
    out.extrapolation_note = "closing decades disagree on the trend sign";
    return out;
  }
  constexpr double kStrictFloor = 1e-9;
  const double x_max = out.trend_values.back().x;
  double tail_min = std::numeric_limits<double>::infinity();
  for (const auto& p : out.trend_values)
    if (p.x >= x_max / 100.0) tail_min = std::min(tail_min, p.value);
  if (tail_min > kStrictFloor) {
    out.verdict = Verdict::satisfied;
    std::ostringstream os;
    os << "ratio stays above " << kStrictFloor << " (min " << tail_min << ")";
    if (s2 < 0) os << "; decreasing trend, liminf may still vanish beyond the cap";
    out.extrapolation_note = os.str();
  } else {
    out.verdict = Verdict::violated;
    out.extrapolation_note = "ratio does not stay above a positive floor";
  }
  return out;
}

}  // namespace

AsymptoticVerdict lm_strict_check(const VolatilityModelSpec& spec,
                                  const PhiFunction& phi, double eps1, double eps2,
                                  const std::vector<double>& grid) {
  require_decades(grid, 6);
  if (eps1 < 0.0 || eps2 < 0.0)
    throw std::invalid_argument("lm_strict_check: eps1, eps2 must be >= 0");
  const double e_min = std::min(eps1, eps2);
  const double e_max = std::max(eps1, eps2);
  std::vector<TrendPoint> vals;
  std::string overflow;
  for (double x : grid) {
    const double ph = phi(x);
    if (!(ph > 0.0))
      throw std::invalid_argument("lm_strict_check: phi must be positive on the grid");
    const double m = spec.mu(x);
    const double r = (spec.rho * x * m + spec.b(x) + e_min * m * m - e_max * m) / ph;
    if (!std::isfinite(r)) {
      overflow = "evaluation overflowed at x=" + std::to_string(x);
      break;
    }
    vals.push_back({x, r});
  }
  return liminf_positive_verdict(
      "(rho*x*mu+b+min(eps)*mu^2-max(eps)*mu)/phi", std::move(vals), std::move(overflow));
}

PhiIntegrability phi_integrability(const PhiFunction& phi, double x_max) {
  PhiIntegrability out{PhiIntegrability::Kind::inconclusive, 0, 0, 0, ""};

  // positivity / monotonicity probe
  const auto probe = geometric_grid(phi.a, x_max, 8);
  double prev = -std::numeric_limits<double>::infinity();
  for (double x : probe) {
    const double y = phi(x);
    if (!std::isfinite(y) || y <= 0.0) {
      out.note = "phi not positive/finite at x=" + std::to_string(x);
      return out;
    }
    if (y < prev * (1.0 - 1e-12)) {
      out.note = "phi not monotone at x=" + std::to_string(x);
      return out;
    }
    prev = y;
  }

  const QuadResult main = integrate([&](double x) { return 1.0 / phi(x); }, phi.a,
                                    x_max, 1e-10, 1e-14, 8000);
  if (!main.finite) {
    out.note = "integrand not finite inside [a, X_MAX]";
    return out;
  }

  // power-law tail fit over the closing decade
  const double p_hat = std::log(phi(x_max) / phi(x_max / 10.0)) / std::log(10.0);
  out.tail_exponent = p_hat;
  constexpr double kExponentTol = 1e-3;
  if (p_hat > 1.0 + kExponentTol) {
    const double tail = x_max / (phi(x_max) * (p_hat - 1.0));
    // second fit one decade in, to price the exponent uncertainty
    const double p_hat2 =
        std::log(phi(x_max / 10.0) / phi(x_max / 100.0)) / std::log(10.0);
    const double tail2 = p_hat2 > 1.0 + kExponentTol
                             ? x_max / (phi(x_max) * (p_hat2 - 1.0))
                             : 2.0 * tail;
    out.kind = PhiIntegrability::Kind::integrable;
    out.value = main.value + tail;
    out.error = main.error + std::abs(tail2 - tail) + 1e-12 * std::abs(out.value);
    return out;
  }
  out.kind = PhiIntegrability::Kind::divergent;
  out.note = "tail exponent estimate <= 1";
  return out;
}

namespace {

// Scale-function integral from c toward one boundary. The inner integral
// I(psi) = int_c^psi b/mu^2 is accumulated along the march so each outer
// segment only integrates its own increment.
struct ScaleMarch {
  bool divergent = false;
  double value = 0.0;
  double error = 0.0;
};

ScaleMarch march_scale(const CoefficientFunction& mu, const CoefficientFunction& b,
                       double c, double boundary, double cap) {
  ScaleMarch out;
  const bool to_pos_inf = std::isinf(boundary) && boundary > 0.0;
  const bool to_neg_inf = std::isinf(boundary) && boundary < 0.0;
  const double unit = std::max(1.0, std::abs(c));
  const int max_segments = 64;

  auto inner = [&](double y) {
    const double m = mu(y);
    return b(y) / (m * m);
  };

  double I_base = 0.0;  // inner integral accumulated to the segment start
  double t_prev = c;
  double prev_abs = -1.0;
  std::vector<double> ratios;

  for (int j = 0; j < max_segments; ++j) {
    double t_next;
    if (to_pos_inf)
      t_next = c + unit * (std::pow(2.0, j + 1) - 1.0);
    else if (to_neg_inf)
      t_next = c - unit * (std::pow(2.0, j + 1) - 1.0);
    else
      t_next = boundary + (c - boundary) * std::pow(2.0, -(j + 1));

    // singularity scan: mu must not vanish strictly inside the march
    {
      const int n_scan = 24;
      double prev_m = mu(t_prev);
      for (int i = 1; i <= n_scan; ++i) {
        const double y = t_prev + (t_next - t_prev) * (double)i / n_scan;
        const double m = mu(y);
        const bool interior = std::isfinite(boundary) ? (i < n_scan) : true;
        if (interior && (m == 0.0 || prev_m * m < 0.0)) {
          std::ostringstream os;
          os << "scale function: mu vanishes near y=" << y
             << " inside the integration domain";
          throw ScaleSingularityError(os.str());
        }
        prev_m = m;
      }
    }

    const double I_start = I_base;
    auto outer = [&](double psi) {
      const QuadResult qi = integrate(inner, t_prev, psi, 1e-9, 1e-14, 512);
      return std::exp(-2.0 * (I_start + qi.value));
    };
    const QuadResult q = integrate(outer, t_prev, t_next, 1e-8, 1e-16, 256);
    if (!q.finite || !std::isfinite(q.value)) {
      out.divergent = true;
      return out;
    }
    const QuadResult qI = integrate(inner, t_prev, t_next, 1e-10, 1e-14, 512);
    if (!qI.finite) {
      out.divergent = true;  // inner integral blows up within the segment
      return out;
    }
    I_base += qI.value;

    out.value += q.value;
    out.error += q.error;
    if (std::abs(out.value) > cap) {
      out.divergent = true;
      return out;
    }
    const double cur_abs = std::abs(q.value);
    if (prev_abs > 0.0) ratios.push_back(cur_abs / std::max(prev_abs, 1e-300));
    prev_abs = cur_abs;
    if (ratios.size() >= 3) {
      const double r = std::max({ratios[ratios.size() - 1], ratios[ratios.size() - 2],
                                 ratios[ratios.size() - 3]});
      if (r < 0.9) {
        const double tail = cur_abs * r / (1.0 - r);
        if (tail <= std::max(1e-12, 1e-9 * std::abs(out.value))) {
          out.error += tail;
          return out;
        }
      }
    }
    t_prev = t_next;
  }

  // budget exhausted: decide from the decay of the segment sums
  if (ratios.size() >= 3) {
    std::vector<double> last(ratios.end() - 3, ratios.end());
    std::sort(last.begin(), last.end());
    if (last[1] < 1.0 - 1e-3) {
      out.error += prev_abs * last[1] / (1.0 - last[1]);
      return out;
    }
  }
  out.divergent = true;
  return out;
}

}  // namespace

ScaleFunctionResult feller_scale_classify(const CoefficientFunction& mu,
                                          const CoefficientFunction& b, double c,
                                          double lower, double upper,
                                          double divergence_cap) {
  if (!(lower < c && c < upper))
    throw std::invalid_argument("feller_scale_classify: need lower < c < upper");
  ScaleFunctionResult out;

  const ScaleMarch up = march_scale(mu, b, c, upper, divergence_cap);
  out.p_at_upper = up.divergent ? BoundaryEval::divergent : BoundaryEval::finite;
  if (!up.divergent) out.p_upper_value = up.value;

  const ScaleMarch down = march_scale(mu, b, c, lower, divergence_cap);
  out.p_at_lower = down.divergent ? BoundaryEval::divergent : BoundaryEval::finite;
  if (!down.divergent) out.p_lower_value = down.value;  // signed: int_c^x with x < c

  out.quadrature_error_estimate = up.error + down.error;
  out.classification = (out.p_at_upper == BoundaryEval::divergent &&
                        out.p_at_lower == BoundaryEval::divergent)
                           ? ScaleFunctionResult::Classification::NoExplosion
                           : ScaleFunctionResult::Classification::PossibleExplosion;
  return out;
}

ScaleFunctionResult feller_scale_classify(const VolatilityModelSpec& spec, double c,
                                          double lower, double upper,
                                          double divergence_cap) {
  return feller_scale_classify(spec.mu, spec.b, c, lower, upper, divergence_cap);
}

PowerFamilyVerdicts power_family_condition_check(const VolatilityModelSpec& spec,
                                          const PhiFunction& phi, double eps1,
                                          double eps2, const std::vector<double>& grid) {
  if (spec.family != ModelFamily::power)
    throw std::invalid_argument("power_family_condition_check: power-family spec required");
  if (!(spec.rho > 0.0 && spec.gamma + spec.delta > 1.0))
    throw std::invalid_argument(
        "power_family_condition_check: requires rho > 0, gamma + delta > 1");
  require_decades(grid, 6);

  PowerFamilyVerdicts out;

  // limsup (rho alpha x^(gamma+delta) + b(x)) / x
  {
    AsymptoticVerdict v;
    v.quantity = "(rho*alpha*x^(gamma+delta)+b(x))/x";
    std::string overflow;
    for (double x : grid) {
      const double q =
          (spec.rho * spec.alpha * std::pow(x, spec.gamma + spec.delta) + spec.b(x)) / x;
      if (!std::isfinite(q)) {
        overflow = "evaluation overflowed at x=" + std::to_string(x);
        break;
      }
      v.trend_values.push_back({x, q});
    }
    if (!overflow.empty()) {
      v.verdict = Verdict::inconclusive;
      v.extrapolation_note = overflow;
    } else {
      const TailAnalysis t = analyze_tail(v.trend_values);
      const int s1 = trend_sign(t.lo), s2 = trend_sign(t.hi);
      if (!t.ok) {
        v.verdict = Verdict::inconclusive;
        v.extrapolation_note = "too few points in the closing decades";
      } else if (s1 * s2 < 0) {
        v.verdict = Verdict::inconclusive;
        v.extrapolation_note = "closing decades disagree on the trend sign";
      } else if (s1 <= 0 && s2 <= 0) {
        v.verdict = Verdict::satisfied;
        v.extrapolation_note = "quantity flat or decreasing toward the cap";
      } else if (flattening_growth(t)) {
        v.verdict = Verdict::satisfied;
        v.extrapolation_note = "growth flattens across the closing decades (bounded approach)";
      } else {
        v.verdict = Verdict::violated;
        v.extrapolation_note = "quantity grows through the closing decades";
      }
    }
    out.martingale = std::move(v);
  }

  // liminf (rho alpha x^(gamma+delta) + b + min(eps) x^(2 gamma) - max(eps) x^gamma) / phi
  {
    const double e_min = std::min(eps1, eps2);
    const double e_max = std::max(eps1, eps2);
    std::vector<TrendPoint> vals;
    std::string overflow;
    for (double x : grid) {
      const double ph = phi(x);
      if (!(ph > 0.0))
        throw std::invalid_argument("power_family_condition_check: phi must be positive");
      const double r = (spec.rho * spec.alpha * std::pow(x, spec.gamma + spec.delta) +
                        spec.b(x) + e_min * std::pow(x, 2.0 * spec.gamma) -
                        e_max * std::pow(x, spec.gamma)) /
                       ph;
      if (!std::isfinite(r)) {
        overflow = "evaluation overflowed at x=" + std::to_string(x);
        break;
      }
      vals.push_back({x, r});
    }
    out.strict = liminf_positive_verdict(
        "(rho*alpha*x^(gamma+delta)+b+min(eps)*x^(2gamma)-max(eps)*x^gamma)/phi",
        std::move(vals), std::move(overflow));
  }
  return out;
}

}  // namespace slm
