#include "slm/jumps.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slm {

double JumpDriver::mean_size() const {
  double m = 0.0;
  for (const auto& [s, p] : jump_law) m += s * p;
  return m;
}

double JumpDriver::mean_size2() const {
  double m = 0.0;
  for (const auto& [s, p] : jump_law) m += s * s * p;
  return m;
}

double JumpDriver::min_size() const {
  double m = 0.0;
  for (const auto& [s, p] : jump_law)
    if (p > 0.0) m = std::min(m, s);
  return m;
}

JumpDriver JumpDriver::compound_poisson(double intensity,
                                        std::vector<std::pair<double, double>> law,
                                        double brownian_rate) {
  if (intensity < 0.0) throw std::invalid_argument("jump driver: intensity must be >= 0");
  if (brownian_rate < 0.0)
    throw std::invalid_argument("jump driver: brownian rate must be >= 0");
  if (intensity > 0.0) {
    if (law.empty()) throw std::invalid_argument("jump driver: jump law is empty");
    double total = 0.0;
    for (const auto& [s, p] : law) {
      (void)s;
      if (p < 0.0) throw std::invalid_argument("jump driver: negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("jump driver: probabilities must sum to 1");
  }
  JumpDriver d;
  d.intensity = intensity;
  d.jump_law = std::move(law);
  d.brownian_rate = brownian_rate;
  return d;
}

JumpModelSpec JumpModelSpec::make(VolatilityModelSpec base, double alpha_exp) {
  if (!(alpha_exp > 0.0)) throw std::invalid_argument("jump model: alpha must be > 0");
  return {std::move(base), alpha_exp};
}

namespace {

// Knuth Poisson sampler; the per-step mean intensity*h stays small in practice
std::size_t sample_poisson(PathRng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double L = std::exp(-mean);
  double p = 1.0;
  std::size_t n = 0;
  do {
    p *= rng.uniform();
    if (p <= L) return n;
    ++n;
  } while (n < 10000);
  return n;
}

double sample_size(PathRng& rng, const std::vector<std::pair<double, double>>& law) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& [s, p] : law) {
    acc += p;
    if (u <= acc) return s;
  }
  return law.back().first;
}

}  // namespace

JumpPathOutcome simulate_jump_path(const JumpModelSpec& spec, const JumpDriver& driver,
                                   const TimeGrid& grid, const ExplosionBarrier& barrier,
                                   std::uint64_t base_seed, std::uint64_t path_index,
                                   const SimOptions& opts, StoppedPathBundle* record) {
  const VolatilityModelSpec& base = spec.base;
  const std::size_t n = grid.n_steps;
  const double h = grid.h();
  const double sqrt_h = std::sqrt(h);
  const double rho = base.rho;
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const double alpha = spec.alpha_exp;
  const double comp_drift = driver.intensity * driver.mean_size();

  PathRng rng(base_seed, path_index, opts.noise == NoiseMode::zeros,
              opts.antithetic_partner);

  JumpPathOutcome out;
  out.reason = StopReason::matured;
  out.stop_index = n;

  double S = base.S0;
  double v = base.v0;
  double M = 0.0;

  if (record) {
    record->grid = grid;
    record->scheme_used = Scheme::euler;
    record->S_path.push_back(S);
    record->v_path.push_back(v);
    record->B_path.push_back(0.0);
  }
  double B = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const auto [xi1, xi2] = rng.normal_pair();
    const double dB = sqrt_h * xi1;                         // v driver
    const double dBm = sqrt_h * (rho * xi1 + rho_c * xi2);  // continuous part of M

    const double va = std::pow(v, alpha);

    // continuous piece: Brownian part of M plus the compensator drift
    if (driver.brownian_rate > 0.0) {
      const double sg = va * driver.brownian_rate;
      S *= std::exp(sg * dBm - 0.5 * sg * sg * h - va * comp_drift * h);
      M += driver.brownian_rate * dBm;
      out.realized_qv += driver.brownian_rate * driver.brownian_rate * dBm * dBm;
    } else {
      S *= std::exp(-va * comp_drift * h);
    }
    M += -comp_drift * h;

    // jumps within the step
    const std::size_t n_jumps =
        opts.noise == NoiseMode::zeros ? 0 : sample_poisson(rng, driver.intensity * h);
    bool floored = false;
    for (std::size_t j = 0; j < n_jumps; ++j) {
      const double size = sample_size(rng, driver.jump_law);
      const double factor = 1.0 + va * size;
      if (factor <= 0.0) {
        floored = true;  // standing positivity condition violated; keep pre-jump S
        break;
      }
      S *= factor;
      M += size;
      out.realized_qv += size * size;
      ++out.n_jumps;
    }

    // volatility step (Euler, truncated at zero)
    double v_new = v + base.mu(v) * dB + base.b(v) * h;
    v_new = std::max(v_new, 0.0);
    B += dB;

    if (!std::isfinite(S) || !std::isfinite(v_new)) throw NumericalBlowUpError(i + 1);

    v = v_new;
    out.M_end = M;
    if (record) {
      record->S_path.push_back(S);
      record->v_path.push_back(v);
      record->B_path.push_back(B);
    }

    if (floored) {
      out.reason = StopReason::jump_floor;
      out.stop_index = i + 1;
      break;
    }
    if (v >= barrier.top()) {
      out.reason = StopReason::barrier;
      out.stop_index = i + 1;
      break;
    }
  }

  out.S_end = S;
  out.v_end = v;
  if (record) {
    record->stop_reason = out.reason;
    record->stop_index = out.stop_index;
  }
  return out;
}

JumpPositivity jump_positivity_check(const JumpModelSpec& spec, const JumpDriver& driver) {
  if (driver.intensity > 0.0 && driver.jump_law.empty())
    throw std::invalid_argument("jump_positivity_check: jump law required");
  const double worst = driver.min_size();
  if (worst >= 0.0) return {JumpPositivity::Kind::guaranteed, 0.0, 0.0};
  // 1 + v^alpha * worst > 0  <=>  v < (1/|worst|)^(1/alpha)
  const double bound = std::pow(1.0 / -worst, 1.0 / spec.alpha_exp);
  if (spec.base.v0 < bound) return {JumpPositivity::Kind::conditional, bound, worst};
  return {JumpPositivity::Kind::violated, bound, worst};
}

MomentConditionEstimate moment_condition_estimate(const JumpModelSpec& spec,
                                                  const JumpDriver& driver,
                                                  const TimeGrid& grid,
                                                  std::size_t n_paths,
                                                  std::uint64_t seed) {
  const VolatilityModelSpec& base = spec.base;
  const std::size_t n = grid.n_steps;
  const double h = grid.h();
  const double sqrt_h = std::sqrt(h);
  const double disc_rate = driver.intensity * driver.mean_size2();
  const double cont_rate = driver.brownian_rate * driver.brownian_rate;
  const double two_alpha = 2.0 * spec.alpha_exp;

  MomentConditionEstimate out;
  out.n_paths = n_paths;
  std::vector<double> weights;
  weights.reserve(n_paths);
  bool overflow = false;

  for (std::size_t p = 0; p < n_paths; ++p) {
    PathRng rng(seed, p);
    double v = base.v0;
    double exponent = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double vpow = std::pow(v, two_alpha);
      exponent += vpow * (disc_rate + 0.5 * cont_rate) * h;
      const double dW = sqrt_h * rng.normal_pair().first;
      v = std::max(v + base.mu(v) * dW + base.b(v) * h, 0.0);
    }
    if (exponent > 700.0) {
      overflow = true;
      weights.push_back(std::numeric_limits<double>::infinity());
    } else {
      weights.push_back(std::exp(exponent));
    }
  }

  double sum = 0.0, sum_sq = 0.0;
  for (double w : weights) {
    sum += w;
    sum_sq += w * w;
  }
  out.estimate = sum / (double)n_paths;
  if (n_paths > 1) {
    const double var =
        std::max(0.0, (sum_sq - sum * sum / (double)n_paths) / (double)(n_paths - 1));
    out.std_error = std::sqrt(var / (double)n_paths);
  }

  // share of the estimate carried by the top 0.1% of weights
  std::vector<double> sorted = weights;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t top = std::max<std::size_t>(1, n_paths / 1000);
  double top_sum = 0.0;
  for (std::size_t i = sorted.size() - top; i < sorted.size(); ++i) top_sum += sorted[i];
  out.top_share = sum > 0.0 ? top_sum / sum : 0.0;
  out.finite_flag = !overflow && out.top_share < 0.5;
  if (overflow) {
    out.estimate = std::numeric_limits<double>::infinity();
    out.finite_flag = false;
  }
  return out;
}

JumpHJ allocate_hj_jump(double k, double S, double v, double alpha_exp, double lambda,
                        double rho, bool J_zero_rule) {
  const double sva = S * std::pow(v, alpha_exp);
  if (J_zero_rule) {
    // lambda k S^2 v^{2a} + lambda H S v^a = 0
    return {-k * sva, 0.0};
  }
  if (rho == 0.0)
    throw std::invalid_argument("allocate_hj_jump: H_zero rule requires rho != 0");
  // rho J S v^a = -lambda k S^2 v^{2a}
  return {0.0, -lambda * k * sva / rho};
}

JumpDriftResult enlarged_jump_drift(const VolatilityModelSpec& base, double k, double H,
                                    double J, double S, double v, double alpha_exp,
                                    double lambda, double rho) {
  const double va = std::pow(v, alpha_exp);
  const double m = base.mu(v);
  JumpDriftResult out;
  out.residual = lambda * k * S * S * va * va + rho * J * S * va + lambda * H * S * va;
  out.v_drift_add = k * m * m + (rho * H + J) * m;
  const double scale = std::max({std::abs(lambda * k * S * S * va * va),
                                 std::abs(rho * J * S * va), std::abs(lambda * H * S * va),
                                 1e-300});
  if (std::abs(out.residual) > 1e-12 * scale)
    throw std::runtime_error("enlarged_jump_drift: constraint residual exceeds 1e-12");
  return out;
}

}  // namespace slm
