#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "slm/coeffs.hpp"
#include "slm/rng.hpp"

namespace slm {

// Uniform time grid represented by (T, n_steps); times are T * i / n_steps so
// the final grid point equals T exactly.
struct TimeGrid {
  double T = 1.0;
  std::size_t n_steps = 256;

  double h() const { return T / (double)n_steps; }
  double time(std::size_t i) const { return T * (double)i / (double)n_steps; }

  static TimeGrid make(double T, std::size_t n_steps) {
    if (!(T > 0.0) || n_steps == 0)
      throw std::invalid_argument("TimeGrid: need T > 0 and n_steps > 0");
    return {T, n_steps};
  }
};

// Increasing volatility levels; the path stops when v crosses the largest one.
struct ExplosionBarrier {
  std::vector<double> levels;

  double top() const { return levels.back(); }

  static ExplosionBarrier make(std::vector<double> levels) {
    if (levels.empty()) throw std::invalid_argument("barrier: needs >= 1 level");
    double prev = 0.0;
    for (double l : levels) {
      if (!(l > prev)) throw std::invalid_argument("barrier: levels must be strictly increasing and positive");
      prev = l;
    }
    return {std::move(levels)};
  }

  static ExplosionBarrier defaults() { return make({1e2, 1e3, 1e4, 1e6}); }
};

enum class Scheme { euler, milstein };
enum class NoiseMode { normal, zeros };
enum class StopReason { matured, barrier, tau, jump_floor };

std::string to_string(Scheme s);
std::string to_string(StopReason r);

struct SimOptions {
  Scheme scheme = Scheme::euler;
  NoiseMode noise = NoiseMode::normal;
  bool antithetic_partner = false;  // flip the sign of every normal draw
};

struct NumericalBlowUpError : std::runtime_error {
  std::size_t step;
  explicit NumericalBlowUpError(std::size_t step_index)
      : std::runtime_error("numerical blow-up at step " + std::to_string(step_index)),
        step(step_index) {}
};

inline constexpr std::size_t kNoHit = std::numeric_limits<std::size_t>::max();

// Correlated Brownian increments for one step: dB = sqrt(h) z1,
// dW = sqrt(h) (rho z1 + sqrt(1-rho^2) z2).
struct DriverIncrements {
  double dB = 0.0;
  double dW = 0.0;
};

inline DriverIncrements make_increments(PathRng& rng, double rho, double sqrt_h) {
  const auto [z1, z2] = rng.normal_pair();
  return {sqrt_h * z1, sqrt_h * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2)};
}

// Full trajectory record. Arrays hold entries 0..stop_index; nothing beyond
// the stop is emitted. S entries stay strictly positive up to the stop.
struct StoppedPathBundle {
  TimeGrid grid;
  std::vector<double> S_path;
  std::vector<double> v_path;
  std::vector<double> B_path;  // information driver, retained for k evaluation
  std::vector<double> W_path;
  StopReason stop_reason = StopReason::matured;
  std::size_t stop_index = 0;
  double barrier_level = 0.0;               // set when stop_reason == barrier
  std::vector<std::size_t> barrier_hits;    // first index at/above each level
  Scheme scheme_used = Scheme::euler;
  bool tau_gate_failed = false;
  std::map<std::string, std::vector<double>> aux;  // k, H, J, Z when present
};

// Light per-path result for Monte Carlo accumulation.
struct PathOutcome {
  StopReason reason = StopReason::matured;
  std::size_t stop_index = 0;
  double S_end = 0.0;
  double v_end = 0.0;
  double barrier_level = 0.0;
  std::vector<std::size_t> barrier_hits;
  bool gate_failed = false;
  bool guard_clipped = false;
  bool rejected = false;  // realization rejected (hitting time never reached)
  double novikov = 0.0;   // integral of H^2 + J^2 + 2 rho H J up to the stop
  Scheme scheme_used = Scheme::euler;
};

struct StepCtx {
  std::size_t i = 0;
  double t = 0.0, h = 0.0, sqrt_h = 0.0;
  double S = 0.0, v = 0.0, B = 0.0;
  double xi1 = 0.0, xi2 = 0.0;
};

struct StepPlan {
  double dBQ = 0.0;             // martingale increment driving S
  double v_drift_add = 0.0;     // extra dt-drift on v (enlargement terms)
  double s_log_drift_add = 0.0; // extra dt-drift on ln S (numeraire tilt)
  double b_pull = 0.0;          // dt-drift of the information driver B
  bool stop = false;            // stop at the left endpoint
};

// Per-path hook that injects the enlargement machinery into the stepping loop.
// Engine call order per path: start_path, then per step plan_step -> update ->
// post_step. Implementations own their aux buffers.
class PathOverlay {
 public:
  virtual ~PathOverlay() = default;
  // Returns false when the realization is rejected and the path is skipped.
  virtual bool start_path(PathRng& rng, double S0, double v0) {
    (void)rng; (void)S0; (void)v0;
    return true;
  }
  virtual void plan_step(const StepCtx& ctx, StepPlan& plan) { (void)ctx; (void)plan; }
  virtual void post_step(std::size_t i_next, double S, double v, double B, double dBQ,
                         double dW, double h) {
    (void)i_next; (void)S; (void)v; (void)B; (void)dBQ; (void)dW; (void)h;
  }
  virtual bool gate_failed() const { return false; }
  virtual bool guard_clipped() const { return false; }
  virtual double novikov_integral() const { return 0.0; }
  virtual void set_recording(bool on) { (void)on; }
  virtual void collect_aux(StoppedPathBundle& bundle) const { (void)bundle; }
};

// Simulates one path of the coupled (S, v) system. S is updated
// multiplicatively in log space; v by Euler (or Milstein when mu has a
// registered derivative) with truncation at zero. Throws NumericalBlowUpError
// when the state turns non-finite before any barrier stop.
PathOutcome simulate_path_outcome(const VolatilityModelSpec& spec, PathOverlay* overlay,
                                  const TimeGrid& grid, const ExplosionBarrier& barrier,
                                  std::uint64_t base_seed, std::uint64_t path_index,
                                  const SimOptions& opts,
                                  StoppedPathBundle* record = nullptr);

StoppedPathBundle simulate_path(const VolatilityModelSpec& spec, PathOverlay* overlay,
                                const TimeGrid& grid, const ExplosionBarrier& barrier,
                                std::uint64_t seed, const SimOptions& opts = {});

// One-dimensional oracle mode: dX = X sigma(X) dB, multiplicative update.
struct ScalarSde {
  std::function<double(double)> sigma;
  double X0 = 1.0;
};

PathOutcome simulate_scalar_outcome(const ScalarSde& sde, const TimeGrid& grid,
                                    const ExplosionBarrier& barrier,
                                    std::uint64_t base_seed, std::uint64_t path_index,
                                    const SimOptions& opts,
                                    StoppedPathBundle* record = nullptr);

StoppedPathBundle simulate_scalar_sde(const ScalarSde& sde, const TimeGrid& grid,
                                      const ExplosionBarrier& barrier,
                                      std::uint64_t seed, const SimOptions& opts = {});

// Strong-order probe on geometric Brownian motion with a shared driver across
// step sizes. Exponents index h = 2^-e.
struct ConvergenceProbe {
  double slope = 0.0;
  bool degenerate = false;  // all errors numerically zero
  std::vector<std::pair<double, double>> points;  // (h, mean strong error)
};

ConvergenceProbe convergence_probe(Scheme scheme, int h_exp_lo = 4, int h_exp_hi = 10,
                                   std::size_t n_paths = 4000, std::uint64_t seed = 7,
                                   double lambda = 2.0, double sigma = 1.0,
                                   double T = 1.0, double x0 = 1.0);

}  // namespace slm
