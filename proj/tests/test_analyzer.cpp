#include <doctest.h>

#include <cmath>

#include "slm/analyzer.hpp"

using namespace slm;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

VolatilityModelSpec lm_model(double rho = 0.5) {
  return VolatilityModelSpec::basic(coeff::linear(1.0), coeff::lm_drift(rho, 1.0), rho);
}

}  // namespace

TEST_CASE("asymptotic checks require a wide geometric grid") {
  auto spec = lm_model();
  CHECK_THROWS_AS(lm_martingale_check(spec, geometric_grid(1.0, 100.0)),
                  std::invalid_argument);
}

TEST_CASE("lm_martingale_check: reference model gives a constant ratio, satisfied") {
  const auto v = lm_martingale_check(lm_model(), geometric_grid());
  CHECK(v.verdict == Verdict::satisfied);
  // quantity is identically 1 for mu = x, b = x - 0.5 x^2, rho = 0.5
  for (const auto& p : v.trend_values) CHECK(p.value == doctest::Approx(1.0));
}

TEST_CASE("lm_martingale_check: zero case satisfied, quadratic drift violated") {
  auto zero = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 0.0);
  CHECK(lm_martingale_check(zero, geometric_grid()).verdict == Verdict::satisfied);

  auto quad = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::power(1.0, 2.0), 0.5);
  CHECK(lm_martingale_check(quad, geometric_grid()).verdict == Verdict::violated);
}

TEST_CASE("lm_martingale_check: overflow turns the verdict inconclusive") {
  auto spec = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::power(1.0, 200.0), 0.5);
  const auto v = lm_martingale_check(spec, geometric_grid());
  CHECK(v.verdict == Verdict::inconclusive);
  CHECK(v.extrapolation_note.find("overflow") != std::string::npos);
}

TEST_CASE("verdict is inconclusive when the closing decades disagree on the trend") {
  // drift with a hump peaking between the last two decades of the grid
  CoefficientFunction hump;
  hump.name = "hump";
  hump.eval = [](double x) {
    const double l = std::log10(std::max(x, 1e-12)) - 5.0;
    return x * std::exp(-2.0 * l * l);
  };
  auto spec = VolatilityModelSpec::basic(coeff::linear(1.0), hump, 0.0);
  const auto v = lm_martingale_check(spec, geometric_grid());
  CHECK(v.verdict == Verdict::inconclusive);
}

TEST_CASE("lm_strict_check: reference model satisfied at eps = 0.1 with phi = x^2") {
  const auto v = lm_strict_check(lm_model(), PhiFunction::power(2.0), 0.1, 0.1,
                                 geometric_grid());
  CHECK(v.verdict == Verdict::satisfied);
  // ratio tends to min(eps) = 0.1
  CHECK(v.trend_values.back().value == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("lm_strict_check: all-zero drift terms violated") {
  auto zero = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 0.0);
  const auto v = lm_strict_check(zero, PhiFunction::power(2.0), 0.0, 0.0, geometric_grid());
  CHECK(v.verdict == Verdict::violated);
  for (const auto& p : v.trend_values) CHECK(p.value == doctest::Approx(0.0));
}

TEST_CASE("lm_strict_check: power-family numerator with diverging ratio satisfied") {
  // alpha = gamma = delta = 1, b = -0.5 x^2, rho = 0.5, phi = x^1.5
  auto spec = make_power_family(1.0, 1.0, 1.0, 1.0, coeff::power(-0.5, 2.0), 0.5);
  const auto v = lm_strict_check(spec, PhiFunction::power(1.5), 0.1, 0.1, geometric_grid());
  CHECK(v.verdict == Verdict::satisfied);
}

TEST_CASE("lm_strict_check rejects nonpositive phi") {
  PhiFunction bad;
  bad.a = 1.0;
  bad.eval = [](double x) { return x - 100.0; };
  CHECK_THROWS_AS(lm_strict_check(lm_model(), bad, 0.1, 0.1, geometric_grid()),
                  std::invalid_argument);
}

TEST_CASE("phi_integrability: closed-form values at 1e-6 accuracy") {
  const auto p2 = phi_integrability(PhiFunction::power(2.0));
  REQUIRE(p2.kind == PhiIntegrability::Kind::integrable);
  CHECK(std::abs(p2.value - 1.0) <= 1e-6);

  const auto p1 = phi_integrability(PhiFunction::power(1.0));
  CHECK(p1.kind == PhiIntegrability::Kind::divergent);

  const auto p15 = phi_integrability(PhiFunction::power(1.5));
  REQUIRE(p15.kind == PhiIntegrability::Kind::integrable);
  CHECK(std::abs(p15.value - 2.0) <= 1e-6);
}

TEST_CASE("phi_integrability: exponent sweep invariant") {
  for (double eps : {0.1, 0.5, 1.0}) {
    const auto r = phi_integrability(PhiFunction::power(1.0 + eps));
    CHECK(r.kind == PhiIntegrability::Kind::integrable);
  }
  CHECK(phi_integrability(PhiFunction::power(1.0)).kind ==
        PhiIntegrability::Kind::divergent);
}

TEST_CASE("phi_integrability: non-monotone phi is inconclusive") {
  PhiFunction wavy;
  wavy.a = 1.0;
  wavy.eval = [](double x) { return x * (1.2 + std::sin(std::log(x) * 3.0)); };
  const auto r = phi_integrability(wavy);
  CHECK(r.kind == PhiIntegrability::Kind::inconclusive);
}

TEST_CASE("feller: reference volatility model does not explode on (0, inf)") {
  const auto r = feller_scale_classify(coeff::linear(1.0), coeff::lm_drift(0.5, 1.0), 1.0,
                                       0.0, kInf);
  CHECK(r.p_at_upper == BoundaryEval::divergent);
  CHECK(r.p_at_lower == BoundaryEval::divergent);
  CHECK(r.classification == ScaleFunctionResult::Classification::NoExplosion);
}

TEST_CASE("feller: driftless unit diffusion on the full line, p(x) = x") {
  const auto r = feller_scale_classify(coeff::constant(1.0), coeff::zero(), 0.0, -kInf, kInf);
  CHECK(r.p_at_upper == BoundaryEval::divergent);
  CHECK(r.p_at_lower == BoundaryEval::divergent);
  CHECK(r.classification == ScaleFunctionResult::Classification::NoExplosion);
}

TEST_CASE("feller: mu = x^2 has a finite lower limit, possible explosion") {
  // b = 0 so p(x) = x - 1: finite toward 0+, divergent toward infinity
  const auto r = feller_scale_classify(coeff::power(1.0, 2.0), coeff::zero(), 1.0, 0.0, kInf);
  CHECK(r.p_at_upper == BoundaryEval::divergent);
  REQUIRE(r.p_at_lower == BoundaryEval::finite);
  CHECK(*r.p_lower_value == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(r.classification == ScaleFunctionResult::Classification::PossibleExplosion);
}

TEST_CASE("feller property: mu = x^k with the matching drift never explodes") {
  for (double k : {1.0, 2.0, 3.0}) {
    for (double rho : {0.25, 0.5, 0.9}) {
      const auto r = feller_scale_classify(coeff::power(1.0, k), coeff::lm_drift(rho, k),
                                           1.0, 0.0, kInf);
      CHECK(r.classification == ScaleFunctionResult::Classification::NoExplosion);
    }
  }
}

TEST_CASE("feller: vanishing mu inside the domain raises the singularity error") {
  CHECK_THROWS_AS(
      feller_scale_classify(coeff::linear(1.0), coeff::zero(), 1.0, -kInf, kInf),
      ScaleSingularityError);
}

TEST_CASE("feller: interior point must sit inside the interval") {
  CHECK_THROWS_AS(feller_scale_classify(coeff::constant(1.0), coeff::zero(), -1.0, 0.0, kInf),
                  std::invalid_argument);
}

TEST_CASE("power-family conditions: reference model satisfies both") {
  auto spec = make_power_family(1.0, 1.0, 1.0, 1.0, coeff::lm_drift(0.5, 1.0), 0.5);
  const auto t5 = power_family_condition_check(spec, PhiFunction::power(2.0), 0.1, 0.1,
                                           geometric_grid());
  CHECK(t5.martingale.verdict == Verdict::satisfied);
  CHECK(t5.strict.verdict == Verdict::satisfied);
}

TEST_CASE("power-family conditions: exponent gate rejects gamma + delta <= 1") {
  auto spec = make_power_family(1.0, 1.0, 0.45, 0.45, coeff::zero(), 0.5);
  CHECK_THROWS_AS(
      power_family_condition_check(spec, PhiFunction::power(2.0), 0.1, 0.1, geometric_grid()),
      std::invalid_argument);
  auto basic = lm_model();
  CHECK_THROWS_AS(
      power_family_condition_check(basic, PhiFunction::power(2.0), 0.1, 0.1, geometric_grid()),
      std::invalid_argument);
}

TEST_CASE("power-family conditions: exponential drift family") {
  // b = K e^{-ax} - rho alpha x^{gamma+delta}, K = a = 1
  auto spec = make_power_family(1.0, 1.0, 1.0, 1.0,
                                coeff::exp_minus_power(1.0, 1.0, 0.5, 2.0), 0.5);
  const auto t5 = power_family_condition_check(spec, PhiFunction::power(1.5), 0.1, 0.1,
                                           geometric_grid());
  CHECK(t5.martingale.verdict == Verdict::satisfied);
  CHECK(t5.strict.verdict == Verdict::satisfied);
}

TEST_CASE("strict verdicts are monotone in the epsilon floor") {
  // on the tail grid mu = x has mu^2 >= mu, so raising eps1 never flips
  // satisfied to violated
  const auto grid = geometric_grid();
  const auto phi = PhiFunction::power(2.0);
  const std::vector<VolatilityModelSpec> models = {
      lm_model(0.5), lm_model(0.25),
      VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 0.3)};
  for (const auto& m : models) {
    for (double x : {1e4, 1e5, 1e6}) {
      REQUIRE(m.mu(x) * m.mu(x) >= m.mu(x));
      (void)x;
    }
    const double eps2 = 0.3;
    bool was_satisfied = false;
    for (double eps1 : {0.01, 0.05, 0.2, 0.3, 0.6, 1.2}) {
      const auto v = lm_strict_check(m, phi, eps1, eps2, grid);
      if (was_satisfied) CHECK(v.verdict != Verdict::violated);
      if (v.verdict == Verdict::satisfied) was_satisfied = true;
    }
  }
}
