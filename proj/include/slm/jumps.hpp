#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "slm/coeffs.hpp"
#include "slm/engine.hpp"

namespace slm {

// Compensated finite-activity driver: compound Poisson jumps plus an optional
// independent-in-time Brownian part. The drift -intensity * E[size] makes M a
// martingale; the predictable bracket density is
// lambda = intensity * E[size^2] + brownian_rate^2.
struct JumpDriver {
  double intensity = 0.0;                             // jumps per unit time
  std::vector<std::pair<double, double>> jump_law;    // (size, probability)
  double brownian_rate = 0.0;                         // continuous-part volatility

  double mean_size() const;
  double mean_size2() const;
  double angle_bracket_rate() const {
    return intensity * mean_size2() + brownian_rate * brownian_rate;
  }
  double min_size() const;

  static JumpDriver compound_poisson(double intensity,
                                     std::vector<std::pair<double, double>> law,
                                     double brownian_rate = 0.0);
};

// dS = S_- v^alpha dM over a base volatility model.
struct JumpModelSpec {
  VolatilityModelSpec base;
  double alpha_exp = 1.0;

  static JumpModelSpec make(VolatilityModelSpec base, double alpha_exp);
};

struct JumpPathOutcome {
  StopReason reason = StopReason::matured;
  std::size_t stop_index = 0;
  double S_end = 0.0;
  double v_end = 0.0;
  double M_end = 0.0;          // driver value at the stop
  double realized_qv = 0.0;    // [M, M] up to the stop
  std::size_t n_jumps = 0;
};

// Simulates one path: v as in the continuous engine, S multiplied by
// (1 + v^alpha * size) at jump times and by the compensator/continuous factor
// between them. Paths where a jump would push 1 + v^alpha dM <= 0 stop with
// reason jump_floor at the pre-jump value.
JumpPathOutcome simulate_jump_path(const JumpModelSpec& spec, const JumpDriver& driver,
                                   const TimeGrid& grid, const ExplosionBarrier& barrier,
                                   std::uint64_t base_seed, std::uint64_t path_index,
                                   const SimOptions& opts = {},
                                   StoppedPathBundle* record = nullptr);

struct JumpPositivity {
  enum class Kind { guaranteed, conditional, violated } kind;
  double v_bound = 0.0;    // conditional: positivity holds while v < v_bound
  double witness_size = 0.0;  // violated: offending jump size
};

// Positivity of 1 + v^alpha * size over the driver's support.
JumpPositivity jump_positivity_check(const JumpModelSpec& spec, const JumpDriver& driver);

struct MomentConditionEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  bool finite_flag = true;     // false on overflow or a dominating tail
  double top_share = 0.0;      // share of the estimate carried by the top 0.1%
  std::size_t n_paths = 0;
};

// Monte Carlo estimate of E[exp(int v^{2 alpha} d<M^d, M^d> +
// 0.5 int v^{2 alpha} d<M^c, M^c>)] with a heavy-tail diagnostic instead of a
// finiteness certificate.
MomentConditionEstimate moment_condition_estimate(const JumpModelSpec& spec,
                                                  const JumpDriver& driver,
                                                  const TimeGrid& grid,
                                                  std::size_t n_paths,
                                                  std::uint64_t seed);

// Girsanov pair under the jump constraint
//   lambda k S^2 v^{2 alpha} + rho J S v^alpha + lambda H S v^alpha = 0.
struct JumpHJ {
  double H = 0.0;
  double J = 0.0;
};

JumpHJ allocate_hj_jump(double k, double S, double v, double alpha_exp, double lambda,
                        double rho, bool J_zero_rule);

struct JumpDriftResult {
  double v_drift_add = 0.0;
  double residual = 0.0;
};

// v-drift addition k mu(v)^2 + (rho H + J) mu(v) plus the asserted S-side
// residual of the lambda-weighted constraint.
JumpDriftResult enlarged_jump_drift(const VolatilityModelSpec& base, double k, double H,
                                    double J, double S, double v, double alpha_exp,
                                    double lambda, double rho);

}  // namespace slm
