#include <doctest.h>

#include <cmath>
#include <random>

#include "slm/coeffs.hpp"

using namespace slm;

namespace {

std::vector<double> integer_grid(int lo, int hi) {
  std::vector<double> g;
  for (int i = lo; i <= hi; ++i) g.push_back(i);
  return g;
}

}  // namespace

TEST_CASE("registered families agree with their closed forms at random points") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> ux(0.01, 500.0);

  struct Family {
    CoefficientFunction f;
    std::function<double(double)> expected;
  };
  const std::vector<Family> families = {
      {coeff::zero(), [](double) { return 0.0; }},
      {coeff::constant(2.5), [](double) { return 2.5; }},
      {coeff::linear(1.7), [](double x) { return 1.7 * x; }},
      {coeff::power(0.8, 1.5), [](double x) { return 0.8 * std::pow(x, 1.5); }},
      {coeff::capped_linear(1.0, 3.0), [](double x) { return std::min(x, 3.0); }},
      {coeff::lm_drift(0.5, 1.0), [](double x) { return x - 0.5 * x * x; }},
      {coeff::lm_drift(0.9, 3.0), [](double x) { return x - 0.9 * std::pow(x, 4.0); }},
      {coeff::log_minus_power(2.0, 0.5, 2.0),
       [](double x) { return 2.0 * std::log(x) - 0.5 * x * x; }},
      {coeff::sin_minus_power(1.5, 0.5, 2.0),
       [](double x) { return 1.5 * std::sin(x) - 0.5 * x * x; }},
      {coeff::exp_minus_power(1.0, 1.0, 0.5, 2.0),
       [](double x) { return std::exp(-x) - 0.5 * x * x; }},
      {coeff::pow_minus_power(2.0, 0.7, 0.5, 2.0),
       [](double x) { return 2.0 * std::pow(x, 0.7) - 0.5 * x * x; }},
  };

  for (const auto& fam : families) {
    for (int i = 0; i < 20; ++i) {
      const double x = ux(gen);
      const double got = fam.f(x);
      const double want = fam.expected(x);
      CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("registry builds families by name and rejects unknown ones") {
  auto f = coeff::make("lm_drift", {{"rho", 0.5}, {"k", 2.0}});
  CHECK(f(2.0) == doctest::Approx(2.0 - 0.5 * 8.0));
  CHECK_THROWS_AS(coeff::make("nope", {}), std::invalid_argument);
  CHECK_THROWS_AS(coeff::make("power", {{"c", 1.0}}), std::invalid_argument);  // p missing
}

TEST_CASE("registered derivatives match finite differences") {
  const auto fams = {coeff::linear(1.3), coeff::power(2.0, 1.5), coeff::lm_drift(0.5, 1.0),
                     coeff::exp_minus_power(1.0, 1.0, 0.5, 2.0)};
  for (const auto& f : fams) {
    REQUIRE(f.has_deriv());
    for (double x : {0.5, 1.0, 3.0, 10.0}) {
      const double eps = 1e-6 * std::max(1.0, x);
      const double fd = (f(x + eps) - f(x - eps)) / (2.0 * eps);
      CHECK(f.deriv(x) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("validate_coefficients: reference model passes with canonical growth constant") {
  // mu(x) = x, b(x) = x - 0.5 x^2 on {0, 1, ..., 100}
  auto spec = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::lm_drift(0.5, 1.0), 0.5);
  const auto rep = validate_coefficients(spec, integer_grid(0, 100));
  CHECK(rep.all_pass);
  CHECK(rep.fitted_growth_constant >= 1.0);
}

TEST_CASE("validate_coefficients: zero drift passes (b(0) = 0 satisfies b(0) >= 0)") {
  auto spec = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 0.0);
  const auto rep = validate_coefficients(spec, integer_grid(0, 100));
  CHECK(rep.all_pass);
}

TEST_CASE("validate_coefficients: quadratic mu raises the Lipschitz flag, linear b passes") {
  auto spec = VolatilityModelSpec::basic(coeff::power(1.0, 2.0), coeff::linear(1.0), 0.5);
  const auto rep = validate_coefficients(spec, integer_grid(0, 100));
  CHECK_FALSE(rep.all_pass);
  const auto* lip = rep.find("mu_lipschitz_estimate");
  REQUIRE(lip != nullptr);
  CHECK(lip->status == CheckStatus::fail);
  CHECK(lip->witness_x.has_value());
  const auto* growth = rep.find("b_linear_growth");
  REQUIRE(growth != nullptr);
  CHECK(growth->status == CheckStatus::pass);
}

TEST_CASE("validate_coefficients: failing assumptions carry witnesses") {
  // mu(0) != 0 and mu not positive
  auto spec = VolatilityModelSpec::basic(coeff::constant(1.0), coeff::zero(), 0.0);
  auto rep = validate_coefficients(spec, integer_grid(0, 100));
  const auto* at_zero = rep.find("mu_at_zero");
  REQUIRE(at_zero != nullptr);
  CHECK(at_zero->status == CheckStatus::fail);

  auto spec2 = VolatilityModelSpec::basic(coeff::linear(-1.0), coeff::zero(), 0.0);
  auto rep2 = validate_coefficients(spec2, integer_grid(0, 100));
  const auto* pos = rep2.find("mu_positive");
  REQUIRE(pos != nullptr);
  CHECK(pos->status == CheckStatus::fail);
  CHECK(pos->witness_x.has_value());
}

TEST_CASE("validate_coefficients: grid preconditions and evaluation errors") {
  auto spec = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 0.0);
  CHECK_THROWS_AS(validate_coefficients(spec, {}), std::invalid_argument);
  CHECK_THROWS_AS(validate_coefficients(spec, {2.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate_coefficients(spec, {0.0, kXMax * 2.0}), std::invalid_argument);

  // ln-family evaluated at 0 must raise the coefficient evaluation error
  auto ln_spec = VolatilityModelSpec::basic(coeff::linear(1.0),
                                            coeff::log_minus_power(1.0, 0.5, 2.0), 0.5);
  CHECK_THROWS_AS(validate_coefficients(ln_spec, integer_grid(0, 100)),
                  CoefficientEvalError);
}

TEST_CASE("make_power_family: unit parameters reproduce the basic family") {
  auto power = make_power_family(1.0, 1.0, 1.0, 1.0, coeff::lm_drift(0.5, 1.0), 0.5);
  auto basic = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::lm_drift(0.5, 1.0), 0.5);
  for (double x : {0.1, 0.7, 2.0, 9.0}) {
    CHECK(power.mu(x) == doctest::Approx(basic.mu(x)).epsilon(1e-14));
  }
  for (double S : {0.5, 1.0, 2.0})
    for (double v : {0.3, 1.0, 4.0})
      CHECK(power.s_sigma(S, v) == doctest::Approx(basic.s_sigma(S, v)).epsilon(1e-14));
}

TEST_CASE("make_power_family: exponent gate and rejections") {
  // gamma + delta = 2 > 1: accepted
  auto spec = make_power_family(1.0, 2.0, 1.0, 1.0, coeff::zero(), 0.5);
  CHECK(spec.gamma + spec.delta > 1.0);
  CHECK(spec.family == ModelFamily::power);
  // nonpositive exponent: rejected
  CHECK_THROWS_AS(make_power_family(0.0, 1.0, 1.0, 1.0, coeff::zero(), 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_power_family(1.0, 1.0, -0.5, 1.0, coeff::zero(), 0.5),
                  std::invalid_argument);
}

TEST_CASE("make_power_family accepts the logarithmic drift family") {
  // b(x) = K ln(x) - rho alpha x^(gamma+delta), K = 1
  auto spec = make_power_family(2.0, 1.0, 1.5, 1.0,
                                coeff::log_minus_power(1.0, 0.5 * 2.0, 2.5), 0.5);
  CHECK(spec.b(2.0) == doctest::Approx(std::log(2.0) - 1.0 * std::pow(2.0, 2.5)));
}

TEST_CASE("power-family remark drifts validate on a positive grid") {
  const double alpha = 1.0, gamma = 1.0, delta = 1.0, rho = 0.5;
  const double p = gamma + delta;
  const double c = rho * alpha;
  const std::vector<CoefficientFunction> drifts = {
      coeff::log_minus_power(1.0, c, p),
      coeff::sin_minus_power(1.0, c, p),
      coeff::exp_minus_power(1.0, 1.0, c, p),
      coeff::pow_minus_power(1.0, 1.0, c, p),   // m = 1
      coeff::pow_minus_power(1.0, 0.5, c, p),   // m < 1
  };
  auto grid = default_validation_grid();
  std::vector<double> grid_pos(grid.begin() + 1, grid.end());
  for (const auto& b : drifts) {
    auto spec = make_power_family(alpha, 1.0, gamma, delta, b, rho);
    const auto rep = validate_coefficients(spec, grid_pos);
    CHECK(rep.all_pass);
  }
}

TEST_CASE("PhiFunction: construction checks positivity and monotonicity") {
  auto phi = PhiFunction::power(2.0);
  CHECK(phi(3.0) == doctest::Approx(9.0));
  CHECK_THROWS_AS(PhiFunction::power(2.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(PhiFunction::from(1.0, [](double x) { return 10.0 - x; }),
                  std::invalid_argument);  // decreasing
  CHECK_THROWS_AS(PhiFunction::from(1.0, [](double x) { return x - 5.0; }),
                  std::invalid_argument);  // negative near a
}

TEST_CASE("tabulated coefficients interpolate and clamp") {
  auto f = coeff::table({0.0, 1.0, 2.0}, {0.0, 2.0, 3.0});
  CHECK(f(0.5) == doctest::Approx(1.0));
  CHECK(f(1.5) == doctest::Approx(2.5));
  CHECK(f(-1.0) == doctest::Approx(0.0));
  CHECK(f(5.0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(coeff::table({1.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(coeff::table({2.0, 1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("model spec invariants") {
  CHECK_THROWS_AS(VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 0.0, -1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 1.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 0.0, 1.0, 1.0, 0.0),
      std::invalid_argument);
}

TEST_CASE("volatility-diffusion flag follows the factory semantics") {
  CHECK(coeff::linear(1.0).volatility_diffusion);
  CHECK_FALSE(coeff::linear(-1.0).volatility_diffusion);
  CHECK(coeff::power(1.0, 2.0).volatility_diffusion);
  CHECK_FALSE(coeff::constant(1.0).volatility_diffusion);
  CHECK_FALSE(coeff::zero().volatility_diffusion);
}
