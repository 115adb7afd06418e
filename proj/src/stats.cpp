#include "slm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slm {

std::string to_string(DefectVerdict v) {
  switch (v) {
    case DefectVerdict::martingale_consistent: return "martingale-consistent";
    case DefectVerdict::strict_lm_detected: return "strict-LM-detected";
    case DefectVerdict::inconclusive: return "inconclusive";
  }
  return "?";
}

void DefectRunStats::merge(DefectRunStats& o) {
  acc.merge(o.acc);
  gate_failed += o.gate_failed;
  exploded += o.exploded;
  tau_stopped += o.tau_stopped;
  guard_clipped += o.guard_clipped;
  rejected += o.rejected;
  matured += o.matured;
  if (o.scheme_used == Scheme::milstein) scheme_used = Scheme::milstein;
  novikov.insert(novikov.end(), o.novikov.begin(), o.novikov.end());
  o.novikov.clear();
}

namespace {

DefectRunStats run_defect_once(const VolatilityModelSpec& model,
                               const std::optional<EnlargementConfig>& enlargement,
                               const TimeGrid& grid, const DefectNumerics& num,
                               std::uint64_t seed, bool collect_novikov) {
  auto per_path = [&](std::size_t i, DefectRunStats& acc) {
    SimOptions opts = num.sim;
    std::uint64_t stream = i;
    if (num.antithetic) {
      stream = i >> 1;
      opts.antithetic_partner = (i & 1) != 0;
    }
    PathOutcome out;
    if (enlargement) {
      EnlargementOverlay overlay({&model, enlargement->spec, enlargement->alloc,
                                  num.eps1, num.eps2, /*phat_tilt=*/false, grid});
      out = simulate_path_outcome(model, &overlay, grid, num.barrier, seed, stream, opts);
    } else {
      out = simulate_path_outcome(model, nullptr, grid, num.barrier, seed, stream, opts);
    }
    acc.scheme_used = out.scheme_used;
    if (out.rejected) {
      ++acc.rejected;
      return;
    }
    if (out.gate_failed) {
      ++acc.gate_failed;
      return;
    }
    if (out.reason == StopReason::barrier) {
      ++acc.exploded;
      acc.acc.add(0.0);
    } else {
      acc.acc.add(out.S_end);
      if (out.reason == StopReason::tau) {
        if (out.guard_clipped)
          ++acc.guard_clipped;
        else
          ++acc.tau_stopped;
      } else {
        ++acc.matured;
      }
    }
    if (collect_novikov && enlargement) acc.novikov.push_back(out.novikov);
  };
  return run_sharded<DefectRunStats>(num.n_paths, num.threads, per_path);
}

DefectRunStats run_defect_scalar_once(const ScalarSde& sde, const TimeGrid& grid,
                                      const DefectNumerics& num, std::uint64_t seed) {
  auto per_path = [&](std::size_t i, DefectRunStats& acc) {
    SimOptions opts = num.sim;
    std::uint64_t stream = i;
    if (num.antithetic) {
      stream = i >> 1;
      opts.antithetic_partner = (i & 1) != 0;
    }
    const PathOutcome out =
        simulate_scalar_outcome(sde, grid, num.barrier, seed, stream, opts);
    if (out.reason == StopReason::barrier) {
      ++acc.exploded;
      acc.acc.add(0.0);
    } else {
      acc.acc.add(out.S_end);
      ++acc.matured;
    }
  };
  return run_sharded<DefectRunStats>(num.n_paths, num.threads, per_path);
}

DefectReport assemble_report(double S0, const TimeGrid& grid, const DefectNumerics& num,
                             DefectRunStats head, DefectRunStats confirm,
                             bool confirmed_ran) {
  DefectReport rep;
  rep.t_eval = grid.T;
  rep.S0 = S0;
  rep.z = num.confidence_z;
  rep.h = grid.h();
  rep.n_paths_requested = num.n_paths;
  rep.n_paths_effective = head.effective();
  rep.n_gate_failed = head.gate_failed;
  rep.n_exploded = head.exploded;
  rep.n_tau_stopped = head.tau_stopped;
  rep.n_guard_clipped = head.guard_clipped;
  rep.n_rejected = head.rejected;
  rep.scheme_used = head.scheme_used;
  rep.estimate_E = head.acc.mean();
  rep.std_error = head.acc.se();
  rep.defect = S0 - rep.estimate_E;

  std::ostringstream notes;
  notes << "exploded paths contribute 0 to the average (escaped mass; folding the "
           "frozen barrier value back reproduces S0 by optional stopping); ";
  notes << "counts: gate_failed=" << head.gate_failed << " exploded=" << head.exploded
        << " tau=" << head.tau_stopped << " guard=" << head.guard_clipped
        << " rejected=" << head.rejected << " matured=" << head.matured << "; ";

  if (confirmed_ran) {
    rep.confirm_h = 0.5 * grid.h();
    rep.confirm_estimate = confirm.acc.mean();
    rep.confirm_std_error = confirm.acc.se();
    rep.confirm_defect = S0 - rep.confirm_estimate;
    rep.confirm_n_effective = confirm.effective();

    const double z = num.confidence_z;
    const bool pass_head = rep.defect > z * rep.std_error;
    const bool pass_conf = rep.confirm_defect > z * rep.confirm_std_error;
    const bool flat_head = std::abs(rep.defect) <= z * rep.std_error;
    const bool flat_conf = std::abs(rep.confirm_defect) <= z * rep.confirm_std_error;
    const bool overlap = std::abs(rep.estimate_E - rep.confirm_estimate) <=
                         z * (rep.std_error + rep.confirm_std_error);
    if (pass_head && pass_conf) {
      rep.verdict = DefectVerdict::strict_lm_detected;
      if (!overlap)
        notes << "step-size bias: estimates at h and h/2 do not overlap at the "
                 "configured confidence (sign agreement held); ";
    } else if (flat_head && flat_conf) {
      rep.verdict = DefectVerdict::martingale_consistent;
    } else {
      rep.verdict = DefectVerdict::inconclusive;
      notes << "h and h/2 runs disagree on significance; ";
    }
    notes << "confirmation at h/2: estimate=" << rep.confirm_estimate
          << " se=" << rep.confirm_std_error << "; ";
  } else {
    const double z = num.confidence_z;
    if (rep.defect > z * rep.std_error)
      rep.verdict = DefectVerdict::strict_lm_detected;
    else if (std::abs(rep.defect) <= z * rep.std_error)
      rep.verdict = DefectVerdict::martingale_consistent;
    else
      rep.verdict = DefectVerdict::inconclusive;
    notes << "single-step-size run (no h/2 confirmation); ";
  }
  rep.bias_notes = notes.str();
  return rep;
}

}  // namespace

DefectReport estimate_defect(const VolatilityModelSpec& model,
                             const std::optional<EnlargementConfig>& enlargement,
                             const DefectNumerics& num) {
  const TimeGrid grid = num.grid;
  if (enlargement && enlargement->spec.kind != EnlargementKind::independent) {
    const double guard = enlargement->spec.guard(model.T);
    if (enlargement->spec.kind != EnlargementKind::hitting_time &&
        grid.T > model.T - guard + 1e-15)
      throw std::invalid_argument(
          "estimate_defect: evaluation time must stay below T minus the guard");
  }

  DefectRunStats head = run_defect_once(model, enlargement, grid, num, num.seed, true);
  if (enlargement && head.effective() == 0 && head.gate_failed > 0)
    throw std::runtime_error("hypothesis gate failed: all paths stopped at tau = 0");

  std::string mc_note;
  if (enlargement && !head.novikov.empty()) {
    const MeasureChangeReport mc =
        validate_measure_change(head.novikov, default_h_schedule());
    std::ostringstream os;
    os << "measure change: truncated fraction at top level m="
       << mc.levels.back().m << " is " << mc.levels.back().truncated_fraction
       << (mc.validated ? " (Q validated" : " (not validated");
    if (mc.validated_at) os << " at level m=" << *mc.validated_at;
    os << "); ";
    mc_note = os.str();
  }

  DefectRunStats confirm;
  if (num.confirm_at_half_h) {
    const TimeGrid fine{grid.T, grid.n_steps * 2};
    confirm = run_defect_once(model, enlargement, fine, num, num.seed ^ 0x5bf0a8b1ULL,
                              false);
  }
  DefectReport rep = assemble_report(model.S0, grid, num, std::move(head),
                                     std::move(confirm), num.confirm_at_half_h);
  rep.bias_notes += mc_note;
  return rep;
}

DefectReport estimate_defect_scalar(const ScalarSde& sde, const DefectNumerics& num) {
  const TimeGrid grid = num.grid;
  DefectRunStats head = run_defect_scalar_once(sde, grid, num, num.seed);
  DefectRunStats confirm;
  if (num.confirm_at_half_h) {
    const TimeGrid fine{grid.T, grid.n_steps * 2};
    confirm = run_defect_scalar_once(sde, fine, num, num.seed ^ 0x5bf0a8b1ULL);
  }
  return assemble_report(sde.X0, grid, num, std::move(head), std::move(confirm),
                         num.confirm_at_half_h);
}

namespace {

struct DecompShard {
  MeanAcc combined, stopped, barrier;
  std::size_t n_barrier = 0;
  void merge(DecompShard& o) {
    combined.merge(o.combined);
    stopped.merge(o.stopped);
    barrier.merge(o.barrier);
    n_barrier += o.n_barrier;
  }
};

DecompositionResult finish_decomp(double S0, DecompShard total) {
  DecompositionResult out;
  out.S0 = S0;
  out.n_paths = total.combined.n;
  out.n_barrier = total.n_barrier;
  out.term_stopped = total.stopped.mean() * (double)total.stopped.n / (double)total.combined.n;
  out.term_barrier = total.barrier.mean() * (double)total.barrier.n / (double)total.combined.n;
  out.residual = S0 - total.combined.mean();
  out.std_error = total.combined.se();
  return out;
}

}  // namespace

DecompositionResult decomposition_check(const VolatilityModelSpec& model,
                                        double barrier_level, const TimeGrid& grid,
                                        std::size_t n_paths, std::uint64_t seed,
                                        const SimOptions& opts, unsigned threads) {
  const ExplosionBarrier barrier = ExplosionBarrier::make({barrier_level});
  auto per_path = [&](std::size_t i, DecompShard& acc) {
    const PathOutcome out =
        simulate_path_outcome(model, nullptr, grid, barrier, seed, i, opts);
    acc.combined.add(out.S_end);
    if (out.reason == StopReason::barrier) {
      acc.barrier.add(out.S_end);
      ++acc.n_barrier;
    } else {
      acc.stopped.add(out.S_end);
    }
  };
  return finish_decomp(model.S0, run_sharded<DecompShard>(n_paths, threads, per_path));
}

DecompositionResult decomposition_check_scalar(const ScalarSde& sde, double barrier_level,
                                               const TimeGrid& grid, std::size_t n_paths,
                                               std::uint64_t seed, const SimOptions& opts,
                                               unsigned threads) {
  const ExplosionBarrier barrier = ExplosionBarrier::make({barrier_level});
  auto per_path = [&](std::size_t i, DecompShard& acc) {
    const PathOutcome out = simulate_scalar_outcome(sde, grid, barrier, seed, i, opts);
    acc.combined.add(out.S_end);
    if (out.reason == StopReason::barrier) {
      acc.barrier.add(out.S_end);
      ++acc.n_barrier;
    } else {
      acc.stopped.add(out.S_end);
    }
  };
  return finish_decomp(sde.X0, run_sharded<DecompShard>(n_paths, threads, per_path));
}

namespace {

struct ExplosionShard {
  std::vector<MeanAcc> level_hits;
  std::size_t gate_failed = 0, rejected = 0;
  void merge(ExplosionShard& o) {
    if (level_hits.empty()) level_hits.resize(o.level_hits.size());
    for (std::size_t l = 0; l < o.level_hits.size(); ++l)
      level_hits[l].merge(o.level_hits[l]);
    gate_failed += o.gate_failed;
    rejected += o.rejected;
  }
};

}  // namespace

ExplosionReport explosion_probability(const VolatilityModelSpec& model,
                                      const std::optional<EnlargementConfig>& enlargement,
                                      const DefectNumerics& num) {
  const std::size_t n_levels = num.barrier.levels.size();
  auto per_path = [&](std::size_t i, ExplosionShard& acc) {
    if (acc.level_hits.empty()) acc.level_hits.resize(n_levels);
    PathOutcome out;
    if (enlargement) {
      EnlargementOverlay overlay({&model, enlargement->spec, enlargement->alloc,
                                  num.eps1, num.eps2, /*phat_tilt=*/true, num.grid});
      out = simulate_path_outcome(model, &overlay, num.grid, num.barrier, num.seed, i,
                                  num.sim);
    } else {
      EnlargementOverlay overlay({&model,
                                  EnlargementSpec{EnlargementKind::independent},
                                  GirsanovAllocation{}, num.eps1, num.eps2,
                                  /*phat_tilt=*/true, num.grid});
      out = simulate_path_outcome(model, &overlay, num.grid, num.barrier, num.seed, i,
                                  num.sim);
    }
    if (out.rejected) {
      ++acc.rejected;
      return;
    }
    if (out.gate_failed) {
      ++acc.gate_failed;
      return;
    }
    for (std::size_t l = 0; l < n_levels; ++l)
      acc.level_hits[l].add(out.barrier_hits[l] != kNoHit ? 1.0 : 0.0);
  };
  ExplosionShard total = run_sharded<ExplosionShard>(num.n_paths, num.threads, per_path);

  ExplosionReport rep;
  rep.n_gate_failed = total.gate_failed;
  if (total.level_hits.empty()) total.level_hits.resize(n_levels);
  rep.n_paths_effective = total.level_hits.empty() ? 0 : total.level_hits[0].n;
  for (std::size_t l = 0; l < n_levels; ++l) {
    const MeanAcc& a = total.level_hits[l];
    const double p = a.mean();
    const double se = a.n ? std::sqrt(std::max(p * (1.0 - p), 0.0) / (double)a.n) : 0.0;
    rep.levels.push_back({num.barrier.levels[l], p, se});
  }
  rep.liminf_proxy = rep.levels.empty() ? 0.0 : rep.levels.back().p_hat;
  for (std::size_t l = 0; l + 1 < rep.levels.size(); ++l) {
    const auto& a = rep.levels[l];
    const auto& b = rep.levels[l + 1];
    if (b.p_hat > a.p_hat + num.confidence_z * (a.std_error + b.std_error))
      rep.monotone_within_ci = false;
  }
  return rep;
}

ComparisonResult comparison_harness(const CoefficientFunction& mu,
                                    const std::function<double(double)>& drift_lo,
                                    const std::function<double(double)>& drift_hi,
                                    double x0, double y0, const TimeGrid& grid,
                                    std::size_t n_paths, std::uint64_t seed,
                                    const SimOptions& opts, unsigned threads,
                                    double state_cap) {
  if (!(x0 >= y0))
    throw std::invalid_argument("comparison_harness: need x0 >= y0");
  struct Shard {
    std::size_t violations = 0, points = 0;
    void merge(Shard& o) {
      violations += o.violations;
      points += o.points;
    }
  };
  const double h = grid.h();
  const double sqrt_h = std::sqrt(h);
  auto per_path = [&](std::size_t i, Shard& acc) {
    PathRng rng(seed, i, opts.noise == NoiseMode::zeros, opts.antithetic_partner);
    double X = x0, Y = y0;
    for (std::size_t step = 0; step < grid.n_steps; ++step) {
      const double dW = sqrt_h * rng.normal_pair().first;
      X = std::max(X + mu(X) * dW + drift_hi(X) * h, 0.0);
      Y = std::max(Y + mu(Y) * dW + drift_lo(Y) * h, 0.0);
      if (!std::isfinite(X) || !std::isfinite(Y) || std::max(X, Y) >= state_cap) break;
      ++acc.points;
      if (X <= Y) ++acc.violations;
    }
  };
  Shard total = run_sharded<Shard>(n_paths, threads, per_path);
  return {total.violations, total.points};
}

namespace {

// Shadow overlay: delegates to the enlargement overlay and steps the
// epsilon-floored comparison process with the same dW.
class FloorComparisonProbe final : public PathOverlay {
 public:
  FloorComparisonProbe(EnlargementOverlay::Config cfg, const VolatilityModelSpec* model,
                double eps1, double eps2)
      : inner_(std::move(cfg)), model_(model), eps1_(eps1), eps2_(eps2) {}

  bool start_path(PathRng& rng, double S0, double v0) override {
    Y_ = v0;
    prev_v_ = v0;
    violations_ = 0;
    points_ = 0;
    return inner_.start_path(rng, S0, v0);
  }

  void plan_step(const StepCtx& ctx, StepPlan& plan) override {
    prev_v_ = ctx.v;
    inner_.plan_step(ctx, plan);
  }

  void post_step(std::size_t i_next, double S, double v, double B, double dBQ, double dW,
                 double h) override {
    inner_.post_step(i_next, S, v, B, dBQ, dW, h);
    const double m = model_->mu(Y_);
    Y_ = std::max(Y_ + m * dW + (model_->b(Y_) + eps1_ * m * m - eps2_ * m) * h, 0.0);
    ++points_;
    if (v <= Y_) ++violations_;
  }

  bool gate_failed() const override { return inner_.gate_failed(); }
  bool guard_clipped() const override { return inner_.guard_clipped(); }
  double novikov_integral() const override { return inner_.novikov_integral(); }

  std::size_t violations() const { return violations_; }
  std::size_t points() const { return points_; }

 private:
  EnlargementOverlay inner_;
  const VolatilityModelSpec* model_;
  double eps1_, eps2_;
  double Y_ = 0.0, prev_v_ = 0.0;
  std::size_t violations_ = 0, points_ = 0;
};

}  // namespace

ComparisonResult comparison_enlargement_floor(const VolatilityModelSpec& model,
                                     const EnlargementConfig& enlargement,
                                     const DefectNumerics& num) {
  struct Shard {
    std::size_t violations = 0, points = 0;
    void merge(Shard& o) {
      violations += o.violations;
      points += o.points;
    }
  };
  auto per_path = [&](std::size_t i, Shard& acc) {
    FloorComparisonProbe probe({&model, enlargement.spec, enlargement.alloc, num.eps1, num.eps2,
                         /*phat_tilt=*/false, num.grid},
                        &model, num.eps1, num.eps2);
    const PathOutcome out = simulate_path_outcome(model, &probe, num.grid, num.barrier,
                                                  num.seed, i, num.sim);
    if (out.rejected || out.gate_failed) return;
    acc.violations += probe.violations();
    acc.points += probe.points();
  };
  Shard total = run_sharded<Shard>(num.n_paths, num.threads, per_path);
  return {total.violations, total.points};
}

ScanResult supermartingale_scan(const std::vector<DefectReport>& reports, double z) {
  if (reports.size() < 3)
    throw std::invalid_argument("supermartingale_scan: needs >= 3 evaluation times");
  ScanResult out;
  for (const auto& r : reports) out.points.push_back({r.t_eval, r.estimate_E, r.std_error});
  std::sort(out.points.begin(), out.points.end(),
            [](const ScanPoint& a, const ScanPoint& b) { return a.t < b.t; });
  for (std::size_t i = 0; i + 1 < out.points.size(); ++i) {
    const auto& a = out.points[i];
    const auto& b = out.points[i + 1];
    if (b.estimate > a.estimate + z * (a.std_error + b.std_error)) {
      out.nonincreasing_within_ci = false;
      std::ostringstream os;
      os << "E at t=" << b.t << " exceeds E at t=" << a.t << " beyond CI overlap";
      out.witness = os.str();
      break;
    }
  }
  return out;
}

}  // namespace slm
