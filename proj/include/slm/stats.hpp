#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "slm/coeffs.hpp"
#include "slm/engine.hpp"
#include "slm/enlargement.hpp"

namespace slm {

// Mean/variance accumulator with compensated summation; merges are
// order-insensitive up to float reassociation.
struct MeanAcc {
  double sum = 0.0, comp = 0.0;
  double sum_sq = 0.0, comp_sq = 0.0;
  std::size_t n = 0;

  static void kahan_add(double& s, double& c, double x) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }

  void add(double x) {
    kahan_add(sum, comp, x);
    kahan_add(sum_sq, comp_sq, x * x);
    ++n;
  }

  void merge(const MeanAcc& o) {
    kahan_add(sum, comp, o.sum);
    kahan_add(sum, comp, o.comp);
    kahan_add(sum_sq, comp_sq, o.sum_sq);
    kahan_add(sum_sq, comp_sq, o.comp_sq);
    n += o.n;
  }

  double mean() const { return n ? sum / (double)n : 0.0; }
  double variance() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::max(0.0, (sum_sq - (double)n * m * m) / (double)(n - 1));
  }
  double se() const { return n ? std::sqrt(variance() / (double)n) : 0.0; }
};

// Runs per_path over fixed-size shards; shard accumulators are merged in
// shard-index order, so the result does not depend on the thread count.
template <class Acc, class PerPath>
Acc run_sharded(std::size_t n_paths, unsigned threads, PerPath&& per_path,
                std::size_t shard_size = 4096) {
  const std::size_t n_shards = n_paths ? (n_paths + shard_size - 1) / shard_size : 0;
  std::vector<Acc> accs(n_shards);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t s = next.fetch_add(1);
      if (s >= n_shards) return;
      const std::size_t lo = s * shard_size;
      const std::size_t hi = std::min(n_paths, lo + shard_size);
      for (std::size_t i = lo; i < hi; ++i) per_path(i, accs[s]);
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  Acc total;
  for (auto& a : accs) total.merge(a);
  return total;
}

struct EnlargementConfig {
  EnlargementSpec spec;
  GirsanovAllocation alloc;
};

struct DefectNumerics {
  TimeGrid grid;  // horizon = evaluation time
  ExplosionBarrier barrier = ExplosionBarrier::defaults();
  std::size_t n_paths = 100000;
  std::uint64_t seed = 1;
  SimOptions sim;
  double eps1 = 0.05;
  double eps2 = 1.0;
  double confidence_z = 1.96;
  unsigned threads = 1;
  bool antithetic = false;
  bool confirm_at_half_h = true;
};

enum class DefectVerdict { martingale_consistent, strict_lm_detected, inconclusive };

std::string to_string(DefectVerdict v);

struct DefectRunStats {
  MeanAcc acc;  // S_{t and tau}; exploded paths contribute zero
  std::size_t gate_failed = 0, exploded = 0, tau_stopped = 0, guard_clipped = 0,
              rejected = 0, matured = 0;
  std::vector<double> novikov;
  Scheme scheme_used = Scheme::euler;

  void merge(DefectRunStats& o);
  std::size_t effective() const { return acc.n; }
};

struct DefectReport {
  double t_eval = 0.0;
  double S0 = 1.0;
  double estimate_E = 0.0;
  double std_error = 0.0;
  double defect = 0.0;
  double z = 1.96;
  DefectVerdict verdict = DefectVerdict::inconclusive;
  std::string bias_notes;

  double h = 0.0;
  std::size_t n_paths_requested = 0;
  std::size_t n_paths_effective = 0;
  std::size_t n_gate_failed = 0, n_exploded = 0, n_tau_stopped = 0, n_guard_clipped = 0,
              n_rejected = 0;
  Scheme scheme_used = Scheme::euler;

  // half-step confirmation run
  double confirm_h = 0.0;
  double confirm_estimate = 0.0;
  double confirm_std_error = 0.0;
  double confirm_defect = 0.0;
  std::size_t confirm_n_effective = 0;
};

// Monte Carlo estimate of S0 - E[S_{t and tau}] under the enlarged
// local-martingale dynamics (driftless S, drift-augmented v). Exploded paths
// contribute zero to the average: the frozen barrier value is exactly the
// escaping mass, and folding it back in reproduces S0 by optional stopping.
// Headline numbers come from the configured h; a half-step run must confirm
// the verdict. Throws when every path fails the start gate.
DefectReport estimate_defect(const VolatilityModelSpec& model,
                             const std::optional<EnlargementConfig>& enlargement,
                             const DefectNumerics& num);

// Scalar-oracle variant (dX = X sigma(X) dB); no enlargement, no gate.
DefectReport estimate_defect_scalar(const ScalarSde& sde, const DefectNumerics& num);

struct DecompositionResult {
  double residual = 0.0;
  double std_error = 0.0;
  double term_stopped = 0.0;  // E[S_{t and tau} 1{stopped before the barrier}]
  double term_barrier = 0.0;  // E[S_{T_n} 1{barrier hit}]
  double S0 = 1.0;
  std::size_t n_paths = 0;
  std::size_t n_barrier = 0;
};

// Residual of S0 - (E[S 1{t < T_n}] + E[S_{T_n} 1{T_n <= t}]) under
// local-martingale dynamics; must straddle zero.
DecompositionResult decomposition_check(const VolatilityModelSpec& model,
                                        double barrier_level, const TimeGrid& grid,
                                        std::size_t n_paths, std::uint64_t seed,
                                        const SimOptions& opts = {}, unsigned threads = 1);

DecompositionResult decomposition_check_scalar(const ScalarSde& sde, double barrier_level,
                                               const TimeGrid& grid, std::size_t n_paths,
                                               std::uint64_t seed,
                                               const SimOptions& opts = {},
                                               unsigned threads = 1);

struct ExplosionReport {
  struct LevelEstimate {
    double level = 0.0;
    double p_hat = 0.0;
    double std_error = 0.0;
  };
  std::vector<LevelEstimate> levels;
  double liminf_proxy = 0.0;  // estimate at the largest level
  std::size_t n_paths_effective = 0;
  std::size_t n_gate_failed = 0;
  bool monotone_within_ci = true;
};

// P(T_n <= t and tau) per barrier level under the explosion-tilted dynamics
// (enlarged drift plus rho mu(v) v, S carrying the numeraire tilt).
ExplosionReport explosion_probability(const VolatilityModelSpec& model,
                                      const std::optional<EnlargementConfig>& enlargement,
                                      const DefectNumerics& num);

struct ComparisonResult {
  std::size_t violations = 0;
  std::size_t points = 0;
  double fraction() const { return points ? (double)violations / (double)points : 0.0; }
};

// Coupled pair X (hi drift) vs Y (lo drift) sharing diffusion mu and driver
// increments; counts grid points with X <= Y from index 1 on. Paths stop
// counting once either state reaches the cap.
ComparisonResult comparison_harness(const CoefficientFunction& mu,
                                    const std::function<double(double)>& drift_lo,
                                    const std::function<double(double)>& drift_hi,
                                    double x0, double y0, const TimeGrid& grid,
                                    std::size_t n_paths, std::uint64_t seed,
                                    const SimOptions& opts = {}, unsigned threads = 1,
                                    double state_cap = 1e9);

// Enlargement-floor pair: the enlarged v (hi) against the epsilon-floored drift
// b + eps1 mu^2 - eps2 mu (lo) on [0, tau], coupled through the same dW.
ComparisonResult comparison_enlargement_floor(const VolatilityModelSpec& model,
                                     const EnlargementConfig& enlargement,
                                     const DefectNumerics& num);

struct ScanPoint {
  double t = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct ScanResult {
  bool nonincreasing_within_ci = true;
  std::vector<ScanPoint> points;
  std::string witness;  // first violating adjacent pair
};

// Monotonicity of t -> E[S_{t and tau}] across defect reports at increasing
// evaluation times (needs >= 3).
ScanResult supermartingale_scan(const std::vector<DefectReport>& reports, double z = 1.96);

}  // namespace slm
