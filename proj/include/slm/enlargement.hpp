#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slm/coeffs.hpp"
#include "slm/engine.hpp"

namespace slm {

struct KSingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class EnlargementKind { brownian_terminal, hitting_time, finite_partition, independent };

std::string to_string(EnlargementKind k);

// Which random variable L enlarges the filtration at time zero.
//   brownian_terminal : L = B_T
//   hitting_time      : L = T_a, first passage of B over level a > 0
//   finite_partition  : L = 1{B_T > threshold}, a two-cell partition
//   independent       : L independent of the drivers; k vanishes identically
struct EnlargementSpec {
  EnlargementKind kind = EnlargementKind::independent;
  double hitting_level = 1.0;
  double hitting_cap_multiple = 256.0;  // prepass horizon = multiple * T
  double partition_threshold = 0.0;
  // time buffer before the k singularity (T, resp. T_a); <= 0 selects T/1000
  double delta_guard = -1.0;
  // k normalized against d[S,S] (kernel form) or carried as the raw drift
  // density against dt (the closed-form expressions without the 1/(S v) factor)
  bool kernel_against_qv = true;

  double guard(double T) const { return delta_guard > 0.0 ? delta_guard : T / 1000.0; }
};

// Realization of L drawn at path start.
struct RealizedL {
  double B_T = 0.0;
  double T_a = 0.0;
  int cell = 1;            // finite_partition: +1 for {B_T > threshold}
  double cell_prob0 = 1.0; // prior probability of the realized cell
};

// Closed-form Jacod kernel k^L at state (t, S, v, B_t), normalized against
// d[S,S]: the S-drift created by the enlargement is k * sigma_S^2 * dt.
// Throws KSingularityError inside the guard window before T (resp. T_a).
double k_value(const EnlargementSpec& enl, const RealizedL& L, double T_model, double t,
               double S, double v, double B_t);

enum class AllocationRule { J_zero, H_zero, split };

std::string to_string(AllocationRule r);

// Splitting rule for the Girsanov pair (H, J) subject to
//   k (S v)^2 = -(S v) H - rho J.
struct GirsanovAllocation {
  AllocationRule rule = AllocationRule::J_zero;
  double split_theta = 0.5;  // fraction of the constraint carried by H
};

struct HJ {
  double H = 0.0;
  double J = 0.0;
};

HJ allocate_hj(double k, double S, double v, double rho, const GirsanovAllocation& rule);

// k (Sv)^2 + (Sv) H + rho J ; zero when the pair satisfies the constraint
double hj_constraint_residual(double k, double S, double v, double rho, double H,
                              double J);

// Additional v-drift created by the enlargement under the local-martingale
// measure: k mu(v)^2 + (rho H + J) mu(v). Covers the power family through its
// mu(x) = alpha x^gamma.
double enlarged_drift(const VolatilityModelSpec& spec, double k, double H, double J,
                      double v);

struct KProcess {
  std::vector<double> values;     // aligned with the path grid (left endpoints)
  double floor_eps1 = 0.0;
  double singularity_guard = 0.0;
};

struct TauResult {
  std::size_t index = 0;
  bool gate_failed = false;
  enum class Trigger { none, k_floor, hj_cap, gate } trigger = Trigger::none;
};

// First grid index where |k| < eps1 or |rho H + J| > eps2; n when neither
// triggers. Returns index 0 with gate_failed when the setup conditions
// 0 < eps1 < |k_0|, |rho H_0 + J_0| < eps2 do not hold.
TauResult compute_tau(std::span<const double> k_path, std::span<const double> H_path,
                      std::span<const double> J_path, double rho, double eps1,
                      double eps2);

// Signed start-gate condition; estimate_defect excludes
// paths failing it.
inline bool hypothesis_gate_holds(double k0, double eps1) { return k0 > eps1; }

struct DensityProcess {
  std::vector<double> Z_path;               // Z_0 = 1, strictly positive
  double terminal_integrability_stat = 0.0; // 0.5 * int (H^2 + J^2 + 2 rho H J) ds
  double novikov_integral = 0.0;            // the full integral
};

// Stochastic-exponential density along aligned paths:
//   Z_{i+1} = Z_i exp(H dB + J dW - 0.5 (H^2 + J^2 + 2 rho H J) h).
DensityProcess simulate_density(std::span<const double> H_path,
                                std::span<const double> J_path,
                                std::span<const double> dB,
                                std::span<const double> dW, double rho,
                                const TimeGrid& grid);

struct MeasureChangeReport {
  struct Level {
    double m = 0.0;
    double bound = 0.0;               // h(m)
    double truncated_fraction = 0.0;  // P(T_m < T)
  };
  std::vector<Level> levels;
  bool validated = false;
  std::optional<double> validated_at;  // smallest m with fraction below tol
  double tolerance = 1e-3;
};

// Truncation report per level of the h-schedule; validated when the fraction
// of truncated paths falls below the tolerance as m grows.
MeasureChangeReport validate_measure_change(
    const std::vector<double>& novikov_integrals,
    const std::vector<std::pair<double, double>>& h_schedule, double tol = 1e-3);

// Default truncation schedule h(m) = m over doubling levels.
std::vector<std::pair<double, double>> default_h_schedule();

// PathOverlay wiring the enlargement into the engine. In the Q mode S stays
// driftless and v carries the enlarged drift; the phat tilt adds the
// S-numeraire terms (rho mu(v) v on v, +0.5 logvol^2 on ln S).
class EnlargementOverlay final : public PathOverlay {
 public:
  struct Config {
    const VolatilityModelSpec* model = nullptr;
    EnlargementSpec enl;
    GirsanovAllocation alloc;
    double eps1 = 0.05;
    double eps2 = 1.0;
    bool phat_tilt = false;
    TimeGrid grid;  // needed by the hitting-time prepass
  };

  explicit EnlargementOverlay(Config cfg);

  bool start_path(PathRng& rng, double S0, double v0) override;
  void plan_step(const StepCtx& ctx, StepPlan& plan) override;
  void post_step(std::size_t i_next, double S, double v, double B, double dBQ,
                 double dW, double h) override;
  bool gate_failed() const override { return gate_failed_; }
  bool guard_clipped() const override { return guard_clipped_; }
  double novikov_integral() const override { return novikov_; }
  void set_recording(bool on) override { recording_ = on; }
  void collect_aux(StoppedPathBundle& bundle) const override;

  const RealizedL& realized() const { return L_; }
  double k0() const { return k0_; }
  double current_Z() const { return Z_; }

 private:
  double effective_end(double) const;

  Config cfg_;
  RealizedL L_;
  double k0_ = 0.0;
  double k_ = 0.0, H_ = 0.0, J_ = 0.0, Z_ = 1.0;
  double novikov_ = 0.0;
  bool gate_failed_ = false;
  bool guard_clipped_ = false;
  bool recording_ = false;
  std::vector<double> prepass_dB_;  // hitting-time replay buffer
  std::vector<double> k_buf_, H_buf_, J_buf_, Z_buf_;
};

}  // namespace slm
