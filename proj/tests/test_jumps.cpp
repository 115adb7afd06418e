#include <doctest.h>

#include <cmath>

#include "slm/jumps.hpp"
#include "slm/stats.hpp"

using namespace slm;

namespace {

JumpModelSpec flat_vol_model(double v0 = 1.0, double alpha = 1.0) {
  // mu = 0, b = 0 keeps v constant at v0
  auto base = VolatilityModelSpec::basic(coeff::zero(), coeff::zero(), 0.0, 1.0, v0, 1.0);
  return JumpModelSpec::make(std::move(base), alpha);
}

}  // namespace

TEST_CASE("jump driver validation") {
  CHECK_THROWS_AS(JumpDriver::compound_poisson(-1.0, {{1.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(JumpDriver::compound_poisson(1.0, {{1.0, 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(JumpDriver::compound_poisson(1.0, {{1.0, -0.2}, {0.0, 1.2}}),
                  std::invalid_argument);
  const auto d = JumpDriver::compound_poisson(2.0, {{-0.5, 0.5}, {1.0, 0.5}}, 0.3);
  CHECK(d.mean_size() == doctest::Approx(0.25));
  CHECK(d.mean_size2() == doctest::Approx(0.625));
  CHECK(d.angle_bracket_rate() == doctest::Approx(2.0 * 0.625 + 0.09));
  CHECK(d.min_size() == -0.5);
}

TEST_CASE("zero-activity driver keeps S constant") {
  const auto spec = flat_vol_model();
  const auto driver = JumpDriver::compound_poisson(0.0, {});
  for (std::uint64_t p = 0; p < 8; ++p) {
    const auto out = simulate_jump_path(spec, driver, {1.0, 64},
                                        ExplosionBarrier::defaults(), 5, p);
    CHECK(out.S_end == doctest::Approx(1.0));
    CHECK(out.n_jumps == 0);
  }
}

TEST_CASE("compensated Poisson: driver mean vanishes within three standard errors") {
  const auto spec = flat_vol_model();
  const auto driver = JumpDriver::compound_poisson(1.0, {{1.0, 1.0}});
  const TimeGrid grid{1.0, 256};
  MeanAcc m, qv;
  for (std::size_t p = 0; p < 100000; ++p) {
    const auto out =
        simulate_jump_path(spec, driver, grid, ExplosionBarrier::defaults(), 21, p);
    m.add(out.M_end);
    qv.add(out.realized_qv);
  }
  CHECK(std::abs(m.mean()) <= 3.0 * m.se());
  // quadratic-variation consistency: E[M, M]_T = lambda T
  const double target = driver.angle_bracket_rate() * grid.T;
  CHECK(std::abs(qv.mean() - target) <= 3.0 * qv.se());
}

TEST_CASE("positive jumps never trip the floor") {
  const auto spec = flat_vol_model();
  const auto driver = JumpDriver::compound_poisson(1.0, {{1.0, 1.0}});
  std::size_t floored = 0;
  for (std::size_t p = 0; p < 100000; ++p) {
    const auto out = simulate_jump_path(spec, driver, {1.0, 64},
                                        ExplosionBarrier::defaults(), 77, p);
    if (out.reason == StopReason::jump_floor) ++floored;
  }
  CHECK(floored == 0);
}

TEST_CASE("jump positivity check: guaranteed / conditional / violated") {
  const auto spec1 = flat_vol_model();
  const auto pos1 =
      jump_positivity_check(spec1, JumpDriver::compound_poisson(1.0, {{1.0, 1.0}}));
  CHECK(pos1.kind == JumpPositivity::Kind::guaranteed);

  // sizes {-0.5, +1}, alpha = 1, v0 = 1: conditional with bound v < 2
  const auto driver2 = JumpDriver::compound_poisson(1.0, {{-0.5, 0.5}, {1.0, 0.5}});
  const auto pos2 = jump_positivity_check(spec1, driver2);
  REQUIRE(pos2.kind == JumpPositivity::Kind::conditional);
  CHECK(pos2.v_bound == doctest::Approx(2.0));

  // sizes {-2}, v0 = 1: violated with the offending size as witness
  const auto pos3 =
      jump_positivity_check(spec1, JumpDriver::compound_poisson(1.0, {{-2.0, 1.0}}));
  REQUIRE(pos3.kind == JumpPositivity::Kind::violated);
  CHECK(pos3.witness_size == doctest::Approx(-2.0));
}

TEST_CASE("negative jumps stop with the jump_floor reason and S stays positive") {
  // v0 = 3 > bound 2 for sizes {-0.5}: every jump trips the floor
  const auto spec = flat_vol_model(3.0);
  const auto driver = JumpDriver::compound_poisson(5.0, {{-0.5, 1.0}});
  std::size_t floored = 0;
  for (std::size_t p = 0; p < 200; ++p) {
    StoppedPathBundle b;
    const auto out = simulate_jump_path(spec, driver, {1.0, 64},
                                        ExplosionBarrier::defaults(), 13, p, {}, &b);
    if (out.reason == StopReason::jump_floor) ++floored;
    for (double s : b.S_path) CHECK(s > 0.0);
  }
  CHECK(floored > 150);
}

TEST_CASE("moment condition: degenerate volatility gives exactly 1") {
  auto base = VolatilityModelSpec::basic(coeff::zero(), coeff::zero(), 0.0, 1.0, 1.0, 1.0);
  base.v0 = 0.0;  // v identically zero: empty exponent
  const auto spec = JumpModelSpec::make(std::move(base), 1.0);
  const auto driver = JumpDriver::compound_poisson(1.0, {{1.0, 1.0}});
  const auto est = moment_condition_estimate(spec, driver, {1.0, 64}, 2000, 3);
  CHECK(est.estimate == doctest::Approx(1.0));
  CHECK(est.std_error == doctest::Approx(0.0));
  CHECK(est.finite_flag);
}

TEST_CASE("moment condition: deterministic exponent equals e") {
  // v == 1, intensity 1, sizes +1, T = 1, no continuous part: exponent == 1
  const auto spec = flat_vol_model();
  const auto driver = JumpDriver::compound_poisson(1.0, {{1.0, 1.0}});
  const auto est = moment_condition_estimate(spec, driver, {1.0, 128}, 4000, 5);
  CHECK(std::abs(est.estimate - std::exp(1.0)) <= 1e-3 * std::exp(1.0));
  CHECK(est.finite_flag);
}

TEST_CASE("moment condition: bounded volatility stays under the closed-form cap") {
  // v == 2, alpha = 1: exponent = 4 exactly, estimate e^4 with the finite flag on
  const auto spec = flat_vol_model(2.0);
  const auto driver = JumpDriver::compound_poisson(1.0, {{1.0, 1.0}});
  const auto est = moment_condition_estimate(spec, driver, {1.0, 128}, 2000, 5);
  CHECK(est.estimate <= std::exp(4.0) * (1.0 + 1e-9));
  CHECK(est.finite_flag);
}

TEST_CASE("allocate_hj_jump: linear solve of the lambda-weighted constraint") {
  // lambda = 2, k = 0.5, S = v = 1, alpha = 1, J_zero: 2*0.5 + 2H = 0 => H = -0.5
  const auto hj = allocate_hj_jump(0.5, 1.0, 1.0, 1.0, 2.0, 0.5, /*J_zero=*/true);
  CHECK(hj.H == doctest::Approx(-0.5));
  CHECK(hj.J == 0.0);
  CHECK_THROWS_AS(allocate_hj_jump(0.5, 1.0, 1.0, 1.0, 2.0, 0.0, /*J_zero=*/false),
                  std::invalid_argument);
}

TEST_CASE("enlarged_jump_drift: zero k is inert, substitutions match, residual vanishes") {
  auto base = VolatilityModelSpec::basic(coeff::linear(1.0), coeff::zero(), 0.5);
  const auto zero = enlarged_jump_drift(base, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.5);
  CHECK(zero.v_drift_add == 0.0);
  CHECK(zero.residual == 0.0);

  // drift formula arithmetic: mu = x, v = 2, k = 0.5, H = -0.5, J = 0
  // addition = 0.5*4 + (0.5 * -0.5) * 2 = 1.5
  CHECK(enlarged_drift(base, 0.5, -0.5, 0.0, 2.0) == doctest::Approx(1.5));

  // consistent pair at (S, v) = (1, 2): H = -k S v^alpha = -1, zero residual
  const auto hj = allocate_hj_jump(0.5, 1.0, 2.0, 1.0, 2.0, 0.5, true);
  CHECK(hj.H == doctest::Approx(-1.0));
  const auto r = enlarged_jump_drift(base, 0.5, hj.H, hj.J, 1.0, 2.0, 1.0, 2.0, 0.5);
  CHECK(r.v_drift_add == doctest::Approx(0.5 * 4.0 + (0.5 * -1.0) * 2.0));
  CHECK(std::abs(r.residual) <= 1e-12 * 8.0);

  // a mismatched pair trips the residual assertion
  CHECK_THROWS_AS(enlarged_jump_drift(base, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 0.5),
                  std::runtime_error);
}

TEST_CASE("brownian part contributes to the bracket and keeps compensation") {
  const auto spec = flat_vol_model();
  const auto driver = JumpDriver::compound_poisson(1.0, {{1.0, 1.0}}, 0.5);
  const TimeGrid grid{1.0, 128};
  MeanAcc m, qv;
  for (std::size_t p = 0; p < 40000; ++p) {
    const auto out =
        simulate_jump_path(spec, driver, grid, ExplosionBarrier::defaults(), 99, p);
    m.add(out.M_end);
    qv.add(out.realized_qv);
  }
  CHECK(std::abs(m.mean()) <= 3.0 * m.se());
  CHECK(std::abs(qv.mean() - driver.angle_bracket_rate() * grid.T) <= 3.0 * qv.se());
}
