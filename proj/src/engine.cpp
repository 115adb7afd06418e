#include "slm/engine.hpp"

#include <algorithm>
#include <cmath>

namespace slm {

std::string to_string(Scheme s) {
  return s == Scheme::euler ? "euler" : "milstein";
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::matured: return "matured";
    case StopReason::barrier: return "barrier";
    case StopReason::tau: return "tau";
    case StopReason::jump_floor: return "jump_floor";
  }
  return "?";
}

namespace {

constexpr double kLogFloor = -700.0;  // keeps exp() away from denormal underflow
constexpr double kLogCeil = 700.0;

double clamp_log(double x) { return std::min(std::max(x, kLogFloor), kLogCeil); }

void record_state(StoppedPathBundle* rec, double t_unused, double S, double v, double B,
                  double W) {
  (void)t_unused;
  rec->S_path.push_back(S);
  rec->v_path.push_back(v);
  rec->B_path.push_back(B);
  rec->W_path.push_back(W);
}

}  // namespace

PathOutcome simulate_path_outcome(const VolatilityModelSpec& spec, PathOverlay* overlay,
                                  const TimeGrid& grid, const ExplosionBarrier& barrier,
                                  std::uint64_t base_seed, std::uint64_t path_index,
                                  const SimOptions& opts, StoppedPathBundle* record) {
  const std::size_t n = grid.n_steps;
  const double h = grid.h();
  const double sqrt_h = std::sqrt(h);
  const double rho = spec.rho;
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const bool use_milstein = opts.scheme == Scheme::milstein && spec.mu.has_deriv();

  PathOutcome out;
  out.scheme_used = use_milstein ? Scheme::milstein : Scheme::euler;
  out.barrier_hits.assign(barrier.levels.size(), kNoHit);

  PathRng rng(base_seed, path_index, opts.noise == NoiseMode::zeros,
              opts.antithetic_partner);
  if (overlay) {
    overlay->set_recording(record != nullptr);
    if (!overlay->start_path(rng, spec.S0, spec.v0)) {
      out.rejected = true;
      return out;
    }
  }

  double log_S = std::log(spec.S0);
  double S = spec.S0;
  double v = spec.v0;
  double B = 0.0, W = 0.0;

  if (record) {
    record->grid = grid;
    record->scheme_used = out.scheme_used;
    record->barrier_hits.assign(barrier.levels.size(), kNoHit);
    record->S_path.reserve(n + 1);
    record->v_path.reserve(n + 1);
    record->B_path.reserve(n + 1);
    record->W_path.reserve(n + 1);
    record_state(record, 0.0, S, v, B, W);
  }

  out.reason = StopReason::matured;
  out.stop_index = n;

  for (std::size_t i = 0; i < n; ++i) {
    const auto [xi1, xi2] = rng.normal_pair();
    StepCtx ctx{i, grid.time(i), h, sqrt_h, S, v, B, xi1, xi2};
    StepPlan plan;
    plan.dBQ = sqrt_h * xi1;
    if (overlay) overlay->plan_step(ctx, plan);
    if (plan.stop) {
      out.reason = StopReason::tau;
      out.stop_index = i;
      break;
    }
    const double dBQ = plan.dBQ;
    const double dW = rho * dBQ + rho_c * sqrt_h * xi2;

    // volatility step: Euler with truncation at zero (Milstein correction
    // when the derivative of mu is registered)
    const double mu_v = spec.mu(v);
    double v_new = v + mu_v * dW + (spec.b(v) + plan.v_drift_add) * h;
    if (use_milstein) v_new += 0.5 * mu_v * spec.mu.deriv(v) * (dW * dW - h);
    // a +inf drift means the explosion completed within the step: saturate at
    // the cap so the barrier stop fires; NaN is a genuine blow-up
    if (std::isnan(v_new)) throw NumericalBlowUpError(i + 1);
    v_new = std::min(std::max(v_new, 0.0), barrier.top());

    // S step: multiplicative in log space, driftless up to the overlay tilt.
    // The Ito compensator belongs to the noise model and is dropped with it
    // in the zero-noise diagnostic mode (S must stay constant there).
    const double lv = spec.s_logvol(S, v);
    const double comp = opts.noise == NoiseMode::zeros ? 0.0 : 0.5 * lv * lv;
    log_S = clamp_log(log_S + lv * dBQ + (plan.s_log_drift_add - comp) * h);
    S = std::exp(log_S);

    B += dBQ + plan.b_pull * h;
    W += dW;

    if (!std::isfinite(log_S) || !std::isfinite(B)) throw NumericalBlowUpError(i + 1);

    v = v_new;
    if (overlay) overlay->post_step(i + 1, S, v, B, dBQ, dW, h);
    if (record) record_state(record, grid.time(i + 1), S, v, B, W);

    bool stopped = false;
    for (std::size_t l = 0; l < barrier.levels.size(); ++l) {
      if (out.barrier_hits[l] == kNoHit && v >= barrier.levels[l]) {
        out.barrier_hits[l] = i + 1;
        if (l + 1 == barrier.levels.size()) {
          out.reason = StopReason::barrier;
          out.stop_index = i + 1;
          out.barrier_level = barrier.levels[l];
          stopped = true;
        }
      }
    }
    if (stopped) break;
  }

  out.S_end = S;
  out.v_end = v;
  if (overlay) {
    out.gate_failed = overlay->gate_failed();
    out.guard_clipped = overlay->guard_clipped();
    out.novikov = overlay->novikov_integral();
  }
  if (record) {
    record->stop_reason = out.reason;
    record->stop_index = out.stop_index;
    record->barrier_level = out.barrier_level;
    record->barrier_hits = out.barrier_hits;
    record->tau_gate_failed = out.gate_failed;
    if (overlay) overlay->collect_aux(*record);
  }
  return out;
}

StoppedPathBundle simulate_path(const VolatilityModelSpec& spec, PathOverlay* overlay,
                                const TimeGrid& grid, const ExplosionBarrier& barrier,
                                std::uint64_t seed, const SimOptions& opts) {
  StoppedPathBundle bundle;
  simulate_path_outcome(spec, overlay, grid, barrier, seed, 0, opts, &bundle);
  return bundle;
}

PathOutcome simulate_scalar_outcome(const ScalarSde& sde, const TimeGrid& grid,
                                    const ExplosionBarrier& barrier,
                                    std::uint64_t base_seed, std::uint64_t path_index,
                                    const SimOptions& opts, StoppedPathBundle* record) {
  const std::size_t n = grid.n_steps;
  const double h = grid.h();
  const double sqrt_h = std::sqrt(h);
  const bool noisy = opts.noise != NoiseMode::zeros;

  PathOutcome out;
  out.scheme_used = Scheme::euler;
  out.barrier_hits.assign(barrier.levels.size(), kNoHit);

  PathRng rng(base_seed, path_index, !noisy, opts.antithetic_partner);

  double log_X = std::log(sde.X0);
  double X = sde.X0;
  double B = 0.0;

  if (record) {
    record->grid = grid;
    record->scheme_used = out.scheme_used;
    record->barrier_hits.assign(barrier.levels.size(), kNoHit);
    record->S_path.push_back(X);
    record->B_path.push_back(B);
  }

  out.reason = StopReason::matured;
  out.stop_index = n;

  for (std::size_t i = 0; i < n; ++i) {
    const double dB = sqrt_h * rng.normal_pair().first;
    const double s = sde.sigma(X);
    const double l0 = log_X;
    const double comp = noisy ? 0.5 * s * s : 0.0;
    log_X = std::min(std::max(log_X + s * dB - comp * h, kLogFloor), kLogCeil);
    X = std::exp(log_X);
    B += dB;
    if (!std::isfinite(log_X) || !std::isfinite(B)) throw NumericalBlowUpError(i + 1);
    if (record) {
      record->S_path.push_back(X);
      record->B_path.push_back(B);
    }

    // crossing detection with the within-step Brownian-bridge maximum of
    // ln X (frozen volatility); one uniform decides all levels, which keeps
    // level crossings monotone. A crossing freezes the path at the level
    // itself: the continuum path touches the level exactly.
    const double u = noisy ? rng.uniform() : 1.0;
    const double step_var = s * s * h;
    bool stopped = false;
    for (std::size_t l = 0; l < barrier.levels.size(); ++l) {
      if (out.barrier_hits[l] != kNoHit) continue;
      const double L = std::log(barrier.levels[l]);
      bool crossed = log_X >= L || l0 >= L;
      if (!crossed && noisy && step_var > 0.0 && L > l0 && L > log_X)
        crossed = u < std::exp(-2.0 * (L - l0) * (L - log_X) / step_var);
      if (!crossed) continue;
      out.barrier_hits[l] = i + 1;
      if (l + 1 == barrier.levels.size()) {
        out.reason = StopReason::barrier;
        out.stop_index = i + 1;
        out.barrier_level = barrier.levels[l];
        X = barrier.levels[l];
        log_X = L;
        if (record) record->S_path.back() = X;
        stopped = true;
      }
    }
    if (stopped) break;
  }

  out.S_end = X;
  if (record) {
    record->stop_reason = out.reason;
    record->stop_index = out.stop_index;
    record->barrier_level = out.barrier_level;
    record->barrier_hits = out.barrier_hits;
  }
  return out;
}

StoppedPathBundle simulate_scalar_sde(const ScalarSde& sde, const TimeGrid& grid,
                                      const ExplosionBarrier& barrier,
                                      std::uint64_t seed, const SimOptions& opts) {
  StoppedPathBundle bundle;
  simulate_scalar_outcome(sde, grid, barrier, seed, 0, opts, &bundle);
  return bundle;
}

ConvergenceProbe convergence_probe(Scheme scheme, int h_exp_lo, int h_exp_hi,
                                   std::size_t n_paths, std::uint64_t seed,
                                   double lambda, double sigma, double T, double x0) {
  if (h_exp_lo > h_exp_hi) std::swap(h_exp_lo, h_exp_hi);
  const std::size_t n_fine = (std::size_t)1 << h_exp_hi;
  const int n_levels = h_exp_hi - h_exp_lo + 1;
  const double h_fine = T / (double)n_fine;
  const double sqrt_h_fine = std::sqrt(h_fine);

  std::vector<double> err_sum(n_levels, 0.0);
  std::vector<double> dw(n_fine);

  for (std::size_t p = 0; p < n_paths; ++p) {
    PathRng rng(seed, p);
    double W_T = 0.0;
    for (std::size_t i = 0; i < n_fine; ++i) {
      dw[i] = sqrt_h_fine * rng.normal_pair().first;
      W_T += dw[i];
    }
    const double exact = x0 * std::exp((lambda - 0.5 * sigma * sigma) * T + sigma * W_T);

    for (int lev = 0; lev < n_levels; ++lev) {
      const int e = h_exp_lo + lev;
      const std::size_t n_steps = (std::size_t)1 << e;
      const std::size_t agg = n_fine / n_steps;
      const double h = T / (double)n_steps;
      double x = x0;
      std::size_t k = 0;
      for (std::size_t i = 0; i < n_steps; ++i) {
        double dW = 0.0;
        for (std::size_t j = 0; j < agg; ++j) dW += dw[k++];
        double x_new = x + lambda * x * h + sigma * x * dW;
        if (scheme == Scheme::milstein) x_new += 0.5 * sigma * sigma * x * (dW * dW - h);
        x = x_new;
      }
      err_sum[lev] += std::abs(x - exact);
    }
  }

  ConvergenceProbe out;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n_ok = 0;
  for (int lev = 0; lev < n_levels; ++lev) {
    const double h = T / (double)((std::size_t)1 << (h_exp_lo + lev));
    const double mean_err = err_sum[lev] / (double)n_paths;
    out.points.push_back({h, mean_err});
    if (mean_err > 1e-300) {
      const double lx = std::log(h), ly = std::log(mean_err);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++n_ok;
    }
  }
  if (n_ok >= 2) {
    const double den = n_ok * sxx - sx * sx;
    out.slope = den != 0.0 ? (n_ok * sxy - sx * sy) / den : 0.0;
  } else {
    out.degenerate = true;
  }
  return out;
}

}  // namespace slm
