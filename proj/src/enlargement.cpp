#include "slm/enlargement.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slm {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

}  // namespace

std::string to_string(EnlargementKind k) {
  switch (k) {
    case EnlargementKind::brownian_terminal: return "brownian_terminal";
    case EnlargementKind::hitting_time: return "hitting_time";
    case EnlargementKind::finite_partition: return "finite_partition";
    case EnlargementKind::independent: return "independent";
  }
  return "?";
}

std::string to_string(AllocationRule r) {
  switch (r) {
    case AllocationRule::J_zero: return "J_zero";
    case AllocationRule::H_zero: return "H_zero";
    case AllocationRule::split: return "split";
  }
  return "?";
}

double k_value(const EnlargementSpec& enl, const RealizedL& L, double T_model, double t,
               double S, double v, double B_t) {
  const double delta = enl.guard(T_model);
  // the closed forms below are the information drifts of the driver B; the
  // kernel form divides by the S-diffusion so that the S-drift reads
  // k * d[S,S]
  const double norm = enl.kernel_against_qv ? 1.0 / (S * v) : 1.0;
  switch (enl.kind) {
    case EnlargementKind::independent:
      return 0.0;
    case EnlargementKind::brownian_terminal: {
      if (t > T_model - delta) {
        std::ostringstream os;
        os << "k-singularity window: t=" << t << " within " << delta << " of T=" << T_model;
        throw KSingularityError(os.str());
      }
      return norm * (L.B_T - B_t) / (T_model - t);
    }
    case EnlargementKind::hitting_time: {
      if (t > L.T_a - delta) {
        std::ostringstream os;
        os << "k-singularity window: t=" << t << " within " << delta << " of T_a=" << L.T_a;
        throw KSingularityError(os.str());
      }
      const double gap = enl.hitting_level - B_t;
      return norm * (-1.0 / gap + gap / (L.T_a - t));
    }
    case EnlargementKind::finite_partition: {
      if (t > T_model - delta) {
        std::ostringstream os;
        os << "k-singularity window: t=" << t << " within " << delta << " of T=" << T_model;
        throw KSingularityError(os.str());
      }
      const double rem = T_model - t;
      const double z = (B_t - enl.partition_threshold) / std::sqrt(rem);
      const double dens = norm_pdf(z) / std::sqrt(rem);
      const double N_plus = norm_cdf(z);
      if (L.cell > 0) return norm * dens / std::max(N_plus, 1e-300);
      return -norm * dens / std::max(1.0 - N_plus, 1e-300);
    }
  }
  return 0.0;
}

HJ allocate_hj(double k, double S, double v, double rho, const GirsanovAllocation& rule) {
  const double sv = S * v;
  switch (rule.rule) {
    case AllocationRule::J_zero:
      return {-k * sv, 0.0};
    case AllocationRule::H_zero:
      if (rho == 0.0)
        throw std::invalid_argument("allocate_hj: H_zero rule requires rho != 0");
      return {0.0, -k * sv * sv / rho};
    case AllocationRule::split: {
      if (rho == 0.0 && rule.split_theta != 1.0)
        throw std::invalid_argument("allocate_hj: split rule requires rho != 0");
      const double th = rule.split_theta;
      const double H = -th * k * sv;
      const double J = rho == 0.0 ? 0.0 : -(1.0 - th) * k * sv * sv / rho;
      return {H, J};
    }
  }
  return {};
}

double hj_constraint_residual(double k, double S, double v, double rho, double H,
                              double J) {
  const double sv = S * v;
  return k * sv * sv + sv * H + rho * J;
}

double enlarged_drift(const VolatilityModelSpec& spec, double k, double H, double J,
                      double v) {
  const double m = spec.mu(v);
  return k * m * m + (spec.rho * H + J) * m;
}

TauResult compute_tau(std::span<const double> k_path, std::span<const double> H_path,
                      std::span<const double> J_path, double rho, double eps1,
                      double eps2) {
  if (k_path.size() != H_path.size() || k_path.size() != J_path.size())
    throw std::invalid_argument("compute_tau: paths must be aligned");
  TauResult out;
  const std::size_t n = k_path.size();
  out.index = n;
  if (n == 0) return out;
  if (!(eps1 > 0.0) || !(eps1 < std::abs(k_path[0])) ||
      !(std::abs(rho * H_path[0] + J_path[0]) < eps2)) {
    out.index = 0;
    out.gate_failed = true;
    out.trigger = TauResult::Trigger::gate;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(k_path[i]) < eps1) {
      out.index = i;
      out.trigger = TauResult::Trigger::k_floor;
      return out;
    }
    if (std::abs(rho * H_path[i] + J_path[i]) > eps2) {
      out.index = i;
      out.trigger = TauResult::Trigger::hj_cap;
      return out;
    }
  }
  return out;
}

DensityProcess simulate_density(std::span<const double> H_path,
                                std::span<const double> J_path,
                                std::span<const double> dB,
                                std::span<const double> dW, double rho,
                                const TimeGrid& grid) {
  const std::size_t n = H_path.size();
  if (J_path.size() != n || dB.size() != n || dW.size() != n)
    throw std::invalid_argument("simulate_density: paths must be aligned");
  const double h = grid.h();
  DensityProcess out;
  out.Z_path.reserve(n + 1);
  out.Z_path.push_back(1.0);
  double log_Z = 0.0, integral = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double H = H_path[i], J = J_path[i];
    const double quad = H * H + J * J + 2.0 * rho * H * J;
    integral += quad * h;
    log_Z += H * dB[i] + J * dW[i] - 0.5 * quad * h;
    const double Z = std::exp(log_Z);
    if (!std::isfinite(Z) || Z <= 0.0)
      throw std::runtime_error("simulate_density: Z not finite/positive at step " +
                               std::to_string(i + 1));
    out.Z_path.push_back(Z);
  }
  out.novikov_integral = integral;
  out.terminal_integrability_stat = 0.5 * integral;
  return out;
}

MeasureChangeReport validate_measure_change(
    const std::vector<double>& novikov_integrals,
    const std::vector<std::pair<double, double>>& h_schedule, double tol) {
  if (novikov_integrals.empty())
    throw std::invalid_argument("validate_measure_change: no path statistics");
  MeasureChangeReport rep;
  rep.tolerance = tol;
  for (const auto& [m, bound] : h_schedule) {
    std::size_t truncated = 0;
    for (double s : novikov_integrals)
      if (s >= bound) ++truncated;
    const double frac = (double)truncated / (double)novikov_integrals.size();
    rep.levels.push_back({m, bound, frac});
    if (frac < tol && !rep.validated_at) rep.validated_at = m;
  }
  rep.validated = !rep.levels.empty() && rep.levels.back().truncated_fraction < tol;
  return rep;
}

std::vector<std::pair<double, double>> default_h_schedule() {
  std::vector<std::pair<double, double>> sched;
  for (double m = 1.0; m <= 64.0; m *= 2.0) sched.push_back({m, m});
  return sched;
}

EnlargementOverlay::EnlargementOverlay(Config cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.model) throw std::invalid_argument("EnlargementOverlay: model required");
  if (cfg_.enl.kind == EnlargementKind::hitting_time && !(cfg_.enl.hitting_level > 0.0))
    throw std::invalid_argument("EnlargementOverlay: hitting level a must be > 0");
  if (cfg_.enl.kind != EnlargementKind::independent && !(cfg_.eps1 > 0.0))
    throw std::invalid_argument("EnlargementOverlay: eps1 must be > 0");
  if (!(cfg_.eps2 > 0.0))
    throw std::invalid_argument("EnlargementOverlay: eps2 must be > 0");
}

double EnlargementOverlay::effective_end(double T_model) const {
  const double delta = cfg_.enl.guard(T_model);
  if (cfg_.enl.kind == EnlargementKind::hitting_time)
    return std::min(L_.T_a, T_model) - delta;
  if (cfg_.enl.kind == EnlargementKind::independent)
    return std::numeric_limits<double>::infinity();
  return T_model - delta;
}

bool EnlargementOverlay::start_path(PathRng& rng, double S0, double v0) {
  const double T = cfg_.model->T;
  L_ = RealizedL{};
  k_ = H_ = J_ = 0.0;
  Z_ = 1.0;
  novikov_ = 0.0;
  gate_failed_ = false;
  guard_clipped_ = false;
  k_buf_.clear();
  H_buf_.clear();
  J_buf_.clear();
  Z_buf_.clear();
  if (recording_) Z_buf_.push_back(1.0);

  switch (cfg_.enl.kind) {
    case EnlargementKind::independent:
      return true;
    case EnlargementKind::brownian_terminal:
    case EnlargementKind::finite_partition: {
      L_.B_T = std::sqrt(T) * rng.normal();
      L_.cell = L_.B_T > cfg_.enl.partition_threshold ? 1 : -1;
      const double p_plus = norm_cdf(-cfg_.enl.partition_threshold / std::sqrt(T));
      L_.cell_prob0 = L_.cell > 0 ? p_plus : 1.0 - p_plus;
      break;
    }
    case EnlargementKind::hitting_time: {
      // realize T_a by simulating the driver until it reaches the level, on
      // the same step size as the main grid, capped at a generous horizon
      const double h = cfg_.grid.h();
      const double sqrt_h = std::sqrt(h);
      const double a = cfg_.enl.hitting_level;
      const std::size_t cap_steps =
          (std::size_t)std::ceil(cfg_.enl.hitting_cap_multiple * T / h);
      prepass_dB_.clear();
      double B = 0.0;
      bool hit = false;
      for (std::size_t j = 0; j < cap_steps; ++j) {
        const double dB = sqrt_h * rng.normal_pair().first;
        B += dB;
        if (prepass_dB_.size() < cfg_.grid.n_steps) prepass_dB_.push_back(dB);
        if (B >= a) {
          L_.T_a = h * (double)(j + 1);
          hit = true;
          break;
        }
      }
      if (!hit) return false;  // rejected: never reached the level under the cap
      break;
    }
  }

  // start-state gate: 0 < eps1 < k_0 (signed) and
  // |rho H_0 + J_0| < eps2; independent L bypasses the gate since k vanishes
  k0_ = k_value(cfg_.enl, L_, T, 0.0, S0, v0, 0.0);
  const HJ hj0 = allocate_hj(k0_, S0, v0, cfg_.model->rho, cfg_.alloc);
  const double hj_mix0 = std::abs(cfg_.model->rho * hj0.H + hj0.J);
  gate_failed_ = !(hypothesis_gate_holds(k0_, cfg_.eps1) && hj_mix0 < cfg_.eps2);
  return true;
}

void EnlargementOverlay::plan_step(const StepCtx& ctx, StepPlan& plan) {
  if (cfg_.enl.kind == EnlargementKind::independent) {
    k_ = H_ = J_ = 0.0;
    if (recording_) {
      k_buf_.push_back(0.0);
      H_buf_.push_back(0.0);
      J_buf_.push_back(0.0);
    }
    if (cfg_.phat_tilt) {
      const double lv = cfg_.model->s_logvol(ctx.S, ctx.v);
      plan.v_drift_add += cfg_.model->rho * cfg_.model->mu(ctx.v) * ctx.v;
      plan.s_log_drift_add += lv * lv;
      plan.b_pull += lv;
    }
    return;
  }

  const double T = cfg_.model->T;
  if (ctx.t >= effective_end(T) - 1e-15) {
    guard_clipped_ = true;
    plan.stop = true;
    return;
  }

  // with the S-diffusion at zero the kernel is undefined and the enlargement
  // contributes nothing over the step; resume once v re-enters (0, inf)
  if (ctx.v <= 0.0 || ctx.S * ctx.v == 0.0) {
    k_ = H_ = J_ = 0.0;
    if (recording_) {
      k_buf_.push_back(0.0);
      H_buf_.push_back(0.0);
      J_buf_.push_back(0.0);
    }
    if (cfg_.phat_tilt) {
      const double lv = cfg_.model->s_logvol(ctx.S, ctx.v);
      plan.v_drift_add += cfg_.model->rho * cfg_.model->mu(ctx.v) * ctx.v;
      plan.s_log_drift_add += lv * lv;
      plan.b_pull += lv;
    }
    if (cfg_.enl.kind == EnlargementKind::hitting_time)
      plan.dBQ = prepass_dB_[ctx.i] - plan.b_pull * ctx.h;
    return;
  }

  k_ = k_value(cfg_.enl, L_, T, ctx.t, ctx.S, ctx.v, ctx.B);
  const HJ hj = allocate_hj(k_, ctx.S, ctx.v, cfg_.model->rho, cfg_.alloc);
  H_ = hj.H;
  J_ = hj.J;
  if (recording_) {
    k_buf_.push_back(k_);
    H_buf_.push_back(H_);
    J_buf_.push_back(J_);
  }

  const double hj_mix = std::abs(cfg_.model->rho * H_ + J_);
  if (ctx.i == 0) {
    if (gate_failed_) {
      plan.stop = true;
      return;
    }
  } else if (std::abs(k_) < cfg_.eps1 || hj_mix > cfg_.eps2) {
    plan.stop = true;
    return;
  }

  plan.v_drift_add += enlarged_drift(*cfg_.model, k_, H_, J_, ctx.v);
  plan.b_pull += cfg_.enl.kernel_against_qv ? k_ * cfg_.model->s_sigma(ctx.S, ctx.v) : k_;
  if (cfg_.phat_tilt) {
    const double lv = cfg_.model->s_logvol(ctx.S, ctx.v);
    plan.v_drift_add += cfg_.model->rho * cfg_.model->mu(ctx.v) * ctx.v;
    plan.s_log_drift_add += lv * lv;
    plan.b_pull += lv;
  }
  if (cfg_.enl.kind == EnlargementKind::hitting_time) {
    // replay the realized driver: engine accumulates B += dBQ + pull * h
    plan.dBQ = prepass_dB_[ctx.i] - plan.b_pull * ctx.h;
  }
}

void EnlargementOverlay::post_step(std::size_t, double, double, double, double dBQ,
                                   double dW, double h) {
  if (cfg_.enl.kind == EnlargementKind::independent) {
    if (recording_) Z_buf_.push_back(Z_);
    return;
  }
  const double quad = H_ * H_ + J_ * J_ + 2.0 * cfg_.model->rho * H_ * J_;
  novikov_ += quad * h;
  const double factor = std::exp(H_ * dBQ + J_ * dW - 0.5 * quad * h);
  Z_ = std::max(Z_ * factor, 1e-300);
  if (recording_) Z_buf_.push_back(Z_);
}

void EnlargementOverlay::collect_aux(StoppedPathBundle& bundle) const {
  bundle.aux["k"] = k_buf_;
  bundle.aux["H"] = H_buf_;
  bundle.aux["J"] = J_buf_;
  bundle.aux["Z"] = Z_buf_;
}

}  // namespace slm
