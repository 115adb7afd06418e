#include "slm/experiments.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "slm/analyzer.hpp"
#include "slm/report.hpp"

namespace slm {

using nlohmann::json;

namespace {

json verdict_to_json(const AsymptoticVerdict& v, bool include_values = true) {
  json j;
  j["quantity"] = v.quantity;
  j["verdict"] = to_string(v.verdict);
  j["note"] = v.extrapolation_note;
  if (include_values) {
    json grid = json::array(), values = json::array();
    for (const auto& p : v.trend_values) {
      grid.push_back(p.x);
      values.push_back(p.value);
    }
    j["grid"] = std::move(grid);
    j["values"] = std::move(values);
  }
  return j;
}

json defect_to_json(const DefectReport& r) {
  json j;
  j["t_eval"] = r.t_eval;
  j["S0"] = r.S0;
  j["estimate_E"] = r.estimate_E;
  j["std_error"] = r.std_error;
  j["defect"] = r.defect;
  j["z"] = r.z;
  j["verdict"] = to_string(r.verdict);
  j["bias_notes"] = r.bias_notes;
  j["h"] = r.h;
  j["n_paths_requested"] = r.n_paths_requested;
  j["n_paths_effective"] = r.n_paths_effective;
  j["n_gate_failed"] = r.n_gate_failed;
  j["n_exploded"] = r.n_exploded;
  j["n_tau_stopped"] = r.n_tau_stopped;
  j["n_guard_clipped"] = r.n_guard_clipped;
  j["n_rejected"] = r.n_rejected;
  j["scheme"] = to_string(r.scheme_used);
  j["confirm_h"] = r.confirm_h;
  j["confirm_estimate"] = r.confirm_estimate;
  j["confirm_std_error"] = r.confirm_std_error;
  j["confirm_defect"] = r.confirm_defect;
  j["confirm_n_effective"] = r.confirm_n_effective;
  return j;
}

std::string csv_defect_header() {
  return "experiment,config_hash,seed,scheme,model_family,enlargement,t_eval,h,"
         "n_paths,n_effective,gate_failed,exploded,tau_stopped,guard_clipped,rejected,"
         "estimate_E,std_error,defect,z,verdict,confirm_h,confirm_estimate,"
         "confirm_std_error";
}

std::string csv_defect_row(const ExperimentConfig& cfg, const DefectReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(cfg.experiment) << ',' << cfg.config_hash << ',' << cfg.numerics.seed
     << ',' << to_string(r.scheme_used) << ','
     << (cfg.model.family == ModelFamily::basic ? "basic" : "power") << ','
     << (cfg.enlargement ? to_string(cfg.enlargement->spec.kind) : "none") << ','
     << r.t_eval << ',' << r.h << ',' << r.n_paths_requested << ','
     << r.n_paths_effective << ',' << r.n_gate_failed << ',' << r.n_exploded << ','
     << r.n_tau_stopped << ',' << r.n_guard_clipped << ',' << r.n_rejected << ','
     << r.estimate_E << ',' << r.std_error << ',' << r.defect << ',' << r.z << ','
     << to_string(r.verdict) << ',' << r.confirm_h << ',' << r.confirm_estimate << ','
     << r.confirm_std_error;
  return os.str();
}

json base_report(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = to_string(cfg.experiment);
  j["config_hash"] = cfg.config_hash;
  j["seed"] = cfg.numerics.seed;
  j["scheme"] = to_string(cfg.numerics.sim.scheme);
  j["model"] = {
      {"family", cfg.model.family == ModelFamily::basic ? "basic" : "power"},
      {"mu", cfg.model.mu.name},
      {"b", cfg.model.b.name},
      {"rho", cfg.model.rho},
      {"S0", cfg.model.S0},
      {"v0", cfg.model.v0},
      {"T", cfg.model.T},
  };
  if (cfg.enlargement) {
    j["enlargement"] = {
        {"kind", to_string(cfg.enlargement->spec.kind)},
        {"allocation", to_string(cfg.enlargement->alloc.rule)},
        {"eps1", cfg.numerics.eps1},
        {"eps2", cfg.numerics.eps2},
    };
  } else {
    j["enlargement"] = nullptr;
  }
  return j;
}

struct ExperimentRun {
  json report;
  std::vector<std::string> csv_lines;  // header + rows
  bool inconclusive = false;
};

ExperimentRun run_analyze(const ExperimentConfig& cfg) {
  ExperimentRun run;
  json j = base_report(cfg);

  const auto vgrid = default_validation_grid();
  // logarithmic drift families are singular at zero; validate on x > 0 only
  std::vector<double> grid_pos(vgrid.begin() + 1, vgrid.end());
  const bool b0_finite = std::isfinite(cfg.model.b.eval(0.0));
  json checks = json::array();
  try {
    const CoefficientValidationReport rep =
        validate_coefficients(cfg.model, b0_finite ? vgrid : grid_pos);
    for (const auto& c : rep.checks) {
      json cj;
      cj["name"] = c.name;
      cj["status"] = c.status == CheckStatus::pass
                         ? "pass"
                         : (c.status == CheckStatus::fail ? "fail" : "skipped");
      if (c.witness_x) cj["witness_x"] = *c.witness_x;
      cj["detail"] = c.detail;
      checks.push_back(std::move(cj));
    }
    j["fitted_growth_constant"] = rep.fitted_growth_constant;
    j["lipschitz_estimate"] = rep.lipschitz_estimate;
  } catch (const CoefficientEvalError& e) {
    // record the failure and keep going: the asymptotic checks have their own
    // overflow handling (inconclusive with a note)
    checks.push_back({{"name", "evaluation"}, {"status", "fail"}, {"detail", e.what()}});
  }
  j["coefficient_checks"] = std::move(checks);

  const auto agrid = geometric_grid();
  const AsymptoticVerdict mart = lm_martingale_check(cfg.model, agrid);
  const AsymptoticVerdict strict =
      lm_strict_check(cfg.model, cfg.phi, cfg.numerics.eps1, cfg.numerics.eps2, agrid);
  j["martingale_check"] = verdict_to_json(mart);
  j["strict_check"] = verdict_to_json(strict);

  const PhiIntegrability phi = phi_integrability(cfg.phi);
  j["phi_integrability"] = {
      {"kind", phi.kind == PhiIntegrability::Kind::integrable
                   ? "integrable"
                   : (phi.kind == PhiIntegrability::Kind::divergent ? "divergent"
                                                                    : "inconclusive")},
      {"value", phi.value},
      {"error", phi.error},
      {"tail_exponent", phi.tail_exponent},
      {"note", phi.note},
  };

  run.inconclusive = mart.verdict == Verdict::inconclusive ||
                     strict.verdict == Verdict::inconclusive ||
                     phi.kind == PhiIntegrability::Kind::inconclusive;

  if (cfg.model.family == ModelFamily::power) {
    const PowerFamilyVerdicts t5 = power_family_condition_check(
        cfg.model, cfg.phi, cfg.numerics.eps1, cfg.numerics.eps2, agrid);
    j["power_martingale_check"] = verdict_to_json(t5.martingale);
    j["power_strict_check"] = verdict_to_json(t5.strict);
    run.inconclusive = run.inconclusive ||
                       t5.martingale.verdict == Verdict::inconclusive ||
                       t5.strict.verdict == Verdict::inconclusive;
  }

  run.csv_lines = {"experiment,config_hash,seed,quantity,verdict",
                   to_string(cfg.experiment) + "," + cfg.config_hash + "," +
                       std::to_string(cfg.numerics.seed) + ",martingale," +
                       to_string(mart.verdict),
                   to_string(cfg.experiment) + "," + cfg.config_hash + "," +
                       std::to_string(cfg.numerics.seed) + ",strict," +
                       to_string(strict.verdict)};
  run.report = std::move(j);
  return run;
}

ExperimentRun run_feller(const ExperimentConfig& cfg) {
  ExperimentRun run;
  json j = base_report(cfg);
  const ScaleFunctionResult r =
      feller_scale_classify(cfg.model, cfg.feller_c, cfg.feller_lower, cfg.feller_upper);
  auto boundary = [](BoundaryEval e, const std::optional<double>& val) {
    json b;
    b["kind"] = e == BoundaryEval::divergent ? "divergent" : "finite";
    if (val) b["value"] = *val;
    return b;
  };
  j["domain"] = {{"lower", std::isinf(cfg.feller_lower) ? json("-inf") : json(cfg.feller_lower)},
                 {"upper", std::isinf(cfg.feller_upper) ? json("inf") : json(cfg.feller_upper)},
                 {"c", cfg.feller_c}};
  j["p_at_lower"] = boundary(r.p_at_lower, r.p_lower_value);
  j["p_at_upper"] = boundary(r.p_at_upper, r.p_upper_value);
  j["classification"] =
      r.classification == ScaleFunctionResult::Classification::NoExplosion
          ? "NoExplosion"
          : "PossibleExplosion";
  j["quadrature_error_estimate"] = r.quadrature_error_estimate;
  run.csv_lines = {"experiment,config_hash,seed,classification",
                   to_string(cfg.experiment) + "," + cfg.config_hash + "," +
                       std::to_string(cfg.numerics.seed) + "," +
                       j["classification"].get<std::string>()};
  run.report = std::move(j);
  return run;
}

std::string build_path_dump(const ExperimentConfig& cfg, std::size_t n_dump) {
  std::ostringstream os;
  os.precision(17);
  os << "path,t,S,v,B,W,k,Z\n";
  for (std::size_t p = 0; p < n_dump; ++p) {
    StoppedPathBundle bundle;
    if (cfg.enlargement) {
      EnlargementOverlay overlay({&cfg.model, cfg.enlargement->spec,
                                  cfg.enlargement->alloc, cfg.numerics.eps1,
                                  cfg.numerics.eps2, false, cfg.numerics.grid});
      simulate_path_outcome(cfg.model, &overlay, cfg.numerics.grid, cfg.numerics.barrier,
                            cfg.numerics.seed, p, cfg.numerics.sim, &bundle);
    } else {
      simulate_path_outcome(cfg.model, nullptr, cfg.numerics.grid, cfg.numerics.barrier,
                            cfg.numerics.seed, p, cfg.numerics.sim, &bundle);
    }
    const auto& aux = bundle.aux;
    auto aux_at = [&aux](const char* key, std::size_t i) -> double {
      const auto it = aux.find(key);
      if (it == aux.end() || it->second.empty()) return 0.0;
      return it->second[std::min(i, it->second.size() - 1)];
    };
    for (std::size_t i = 0; i < bundle.S_path.size(); ++i) {
      os << p << ',' << bundle.grid.time(i) << ',' << bundle.S_path[i] << ','
         << bundle.v_path[i] << ',' << bundle.B_path[i] << ','
         << (i < bundle.W_path.size() ? bundle.W_path[i] : 0.0) << ','
         << aux_at("k", i) << ',' << aux_at("Z", i) << '\n';
    }
  }
  return os.str();
}

ExperimentRun run_defect_like(const ExperimentConfig& cfg, bool summary_only) {
  ExperimentRun run;
  json j = base_report(cfg);
  DefectNumerics num = cfg.numerics;
  if (summary_only) num.confirm_at_half_h = false;
  const DefectReport rep = estimate_defect(cfg.model, cfg.enlargement, num);
  j[summary_only ? "summary" : "defect"] = defect_to_json(rep);
  run.inconclusive = rep.verdict == DefectVerdict::inconclusive;
  run.csv_lines = {csv_defect_header(), csv_defect_row(cfg, rep)};
  run.report = std::move(j);
  return run;
}

ExperimentRun run_compare(const ExperimentConfig& cfg) {
  ExperimentRun run;
  json j = base_report(cfg);
  json rows = json::array();
  run.csv_lines = {"experiment,config_hash,seed,pair,h_exponent,violations,points,fraction"};
  double prev_fraction = std::numeric_limits<double>::infinity();
  bool nonincreasing = true;
  for (int e : cfg.compare.h_exponents) {
    const TimeGrid grid{cfg.t_eval, (std::size_t)1 << e};
    DefectNumerics num = cfg.numerics;
    num.grid = grid;
    ComparisonResult r;
    if (cfg.compare.pair == "enlargement_floor") {
      if (!cfg.enlargement)
        throw ConfigError("enlargement.kind", "is required for the enlargement_floor pair");
      r = comparison_enlargement_floor(cfg.model, *cfg.enlargement, num);
    } else {
      const auto& model = cfg.model;
      auto drift = [&model](double x) { return model.b(x); };
      r = comparison_harness(cfg.model.mu, drift, drift, cfg.model.v0 + 1.0, cfg.model.v0,
                             grid, cfg.numerics.n_paths, cfg.numerics.seed,
                             cfg.numerics.sim, cfg.numerics.threads);
    }
    const double frac = r.fraction();
    if (frac > prev_fraction + 1e-15) nonincreasing = false;
    prev_fraction = frac;
    rows.push_back({{"h_exponent", e},
                    {"violations", r.violations},
                    {"points", r.points},
                    {"fraction", frac}});
    std::ostringstream os;
    os.precision(17);
    os << to_string(cfg.experiment) << ',' << cfg.config_hash << ',' << cfg.numerics.seed
       << ',' << cfg.compare.pair << ',' << e << ',' << r.violations << ',' << r.points
       << ',' << frac;
    run.csv_lines.push_back(os.str());
  }
  j["pair"] = cfg.compare.pair;
  j["rows"] = std::move(rows);
  j["fraction_nonincreasing_in_h"] = nonincreasing;
  run.report = std::move(j);
  return run;
}

ExperimentRun run_jumps(const ExperimentConfig& cfg) {
  ExperimentRun run;
  json j = base_report(cfg);
  const JumpExperimentConfig& jc = *cfg.jump;
  const JumpModelSpec spec = JumpModelSpec::make(cfg.model, jc.alpha_exp);

  const JumpPositivity pos = jump_positivity_check(spec, jc.driver);
  json pj;
  pj["kind"] = pos.kind == JumpPositivity::Kind::guaranteed
                   ? "guaranteed"
                   : (pos.kind == JumpPositivity::Kind::conditional ? "conditional"
                                                                    : "violated");
  if (pos.kind == JumpPositivity::Kind::conditional) pj["v_bound"] = pos.v_bound;
  if (pos.kind == JumpPositivity::Kind::violated) pj["witness_size"] = pos.witness_size;
  j["positivity"] = std::move(pj);

  struct Shard {
    MeanAcc m_end, qv, s_end;
    std::size_t floor_stops = 0;
    void merge(Shard& o) {
      m_end.merge(o.m_end);
      qv.merge(o.qv);
      s_end.merge(o.s_end);
      floor_stops += o.floor_stops;
    }
  };
  auto per_path = [&](std::size_t i, Shard& acc) {
    const JumpPathOutcome out = simulate_jump_path(spec, jc.driver, cfg.numerics.grid,
                                                   cfg.numerics.barrier,
                                                   cfg.numerics.seed, i, cfg.numerics.sim);
    acc.m_end.add(out.M_end);
    acc.qv.add(out.realized_qv);
    acc.s_end.add(out.S_end);
    if (out.reason == StopReason::jump_floor) ++acc.floor_stops;
  };
  Shard total =
      run_sharded<Shard>(cfg.numerics.n_paths, cfg.numerics.threads, per_path);

  j["driver"] = {{"intensity", jc.driver.intensity},
                 {"brownian_rate", jc.driver.brownian_rate},
                 {"angle_bracket_rate", jc.driver.angle_bracket_rate()},
                 {"alpha", jc.alpha_exp}};
  j["compensation"] = {{"mean_M", total.m_end.mean()},
                       {"std_error", total.m_end.se()},
                       {"within_3se", std::abs(total.m_end.mean()) <= 3.0 * total.m_end.se()}};
  j["quadratic_variation"] = {
      {"mean_qv", total.qv.mean()},
      {"std_error", total.qv.se()},
      {"expected", jc.driver.angle_bracket_rate() * cfg.numerics.grid.T}};
  j["mean_S_end"] = total.s_end.mean();
  j["jump_floor_stops"] = total.floor_stops;

  const MomentConditionEstimate mom = moment_condition_estimate(
      spec, jc.driver, cfg.numerics.grid, cfg.numerics.n_paths, cfg.numerics.seed ^ 0x7fULL);
  j["moment_condition"] = {{"estimate", mom.estimate},
                           {"std_error", mom.std_error},
                           {"finite_flag", mom.finite_flag},
                           {"top_share", mom.top_share}};

  run.csv_lines = {
      "experiment,config_hash,seed,positivity,mean_M,se_M,mean_qv,expected_qv,"
      "floor_stops,moment_estimate,moment_finite",
  };
  std::ostringstream os;
  os.precision(17);
  os << to_string(cfg.experiment) << ',' << cfg.config_hash << ',' << cfg.numerics.seed
     << ',' << pj.dump() << ',' << total.m_end.mean() << ',' << total.m_end.se() << ','
     << total.qv.mean() << ',' << jc.driver.angle_bracket_rate() * cfg.numerics.grid.T
     << ',' << total.floor_stops << ',' << mom.estimate << ',' << mom.finite_flag;
  run.csv_lines.push_back(os.str());
  run.report = std::move(j);
  return run;
}

ExperimentRun run_validate_q(const ExperimentConfig& cfg) {
  ExperimentRun run;
  json j = base_report(cfg);
  if (!cfg.enlargement)
    throw ConfigError("enlargement.kind", "is required for validate-q");

  struct Shard {
    std::vector<double> novikov;
    std::size_t gate_failed = 0, rejected = 0;
    void merge(Shard& o) {
      novikov.insert(novikov.end(), o.novikov.begin(), o.novikov.end());
      gate_failed += o.gate_failed;
      rejected += o.rejected;
      o.novikov.clear();
    }
  };
  auto per_path = [&](std::size_t i, Shard& acc) {
    EnlargementOverlay overlay({&cfg.model, cfg.enlargement->spec, cfg.enlargement->alloc,
                                cfg.numerics.eps1, cfg.numerics.eps2, false,
                                cfg.numerics.grid});
    const PathOutcome out =
        simulate_path_outcome(cfg.model, &overlay, cfg.numerics.grid, cfg.numerics.barrier,
                              cfg.numerics.seed, i, cfg.numerics.sim);
    if (out.rejected) {
      ++acc.rejected;
      return;
    }
    if (out.gate_failed) {
      ++acc.gate_failed;
      return;
    }
    acc.novikov.push_back(out.novikov);
  };
  Shard total = run_sharded<Shard>(cfg.numerics.n_paths, cfg.numerics.threads, per_path);
  if (total.novikov.empty())
    throw std::runtime_error("hypothesis gate failed: all paths stopped at tau = 0");

  const MeasureChangeReport rep = validate_measure_change(total.novikov, cfg.h_schedule);
  json levels = json::array();
  run.csv_lines = {"experiment,config_hash,seed,m,bound,truncated_fraction"};
  for (const auto& l : rep.levels) {
    levels.push_back({{"m", l.m}, {"bound", l.bound}, {"truncated_fraction", l.truncated_fraction}});
    std::ostringstream os;
    os.precision(17);
    os << to_string(cfg.experiment) << ',' << cfg.config_hash << ',' << cfg.numerics.seed
       << ',' << l.m << ',' << l.bound << ',' << l.truncated_fraction;
    run.csv_lines.push_back(os.str());
  }
  j["levels"] = std::move(levels);
  j["validated"] = rep.validated;
  if (rep.validated_at) j["validated_at_level"] = *rep.validated_at;
  j["tolerance"] = rep.tolerance;
  j["n_paths_effective"] = total.novikov.size();
  j["n_gate_failed"] = total.gate_failed;
  // empirical tail of the quadratic integral
  std::sort(total.novikov.begin(), total.novikov.end());
  auto quantile = [&](double q) {
    const std::size_t idx = (std::size_t)(q * (double)(total.novikov.size() - 1));
    return total.novikov[idx];
  };
  j["novikov_quantiles"] = {{"q50", quantile(0.5)},
                            {"q90", quantile(0.9)},
                            {"q99", quantile(0.99)},
                            {"q999", quantile(0.999)},
                            {"max", total.novikov.back()}};
  run.report = std::move(j);
  return run;
}

}  // namespace

RunOutcome run_experiment(ExperimentConfig cfg) {
  RunOutcome out;
  const auto started = std::chrono::steady_clock::now();
  ExperimentRun run;
  try {
    switch (cfg.experiment) {
      case ExperimentKind::analyze: run = run_analyze(cfg); break;
      case ExperimentKind::feller: run = run_feller(cfg); break;
      case ExperimentKind::simulate: run = run_defect_like(cfg, true); break;
      case ExperimentKind::defect: run = run_defect_like(cfg, false); break;
      case ExperimentKind::compare: run = run_compare(cfg); break;
      case ExperimentKind::jumps: run = run_jumps(cfg); break;
      case ExperimentKind::validate_q: run = run_validate_q(cfg); break;
    }
  } catch (const ConfigError& e) {
    out.exit_code = 1;
    out.error = std::string("error: kind=config field=") + e.field + " msg=\"" + e.what() + "\"";
    return out;
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.error = std::string("error: kind=runtime msg=\"") + e.what() + "\"";
    return out;
  }

  const std::string stem = cfg.output.dir + "/" + to_string(cfg.experiment);
  try {
    if (cfg.output.json) {
      out.report_path = stem + "_report.json";
      atomic_write(out.report_path, run.report.dump(2) + "\n");
    }
    if (cfg.output.csv && !run.csv_lines.empty()) {
      std::string csv;
      for (const auto& line : run.csv_lines) csv += line + "\n";
      atomic_write(stem + "_rows.csv", csv);
    }
    if (cfg.dump_paths &&
        (cfg.experiment == ExperimentKind::simulate ||
         cfg.experiment == ExperimentKind::defect)) {
      const std::size_t n_dump = std::min<std::size_t>(10, cfg.numerics.n_paths);
      atomic_write(stem + "_paths.csv", build_path_dump(cfg, n_dump));
    }
    write_repro_log(stem + "_repro.bin", cfg.numerics.seed,
                    std::stoull(cfg.config_hash, nullptr, 16));

    // wall-clock metadata lives in a sidecar so the main report stays
    // byte-identical across runs
    const auto elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json meta;
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    meta["written_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    meta["elapsed_seconds"] = elapsed;
    atomic_write(stem + "_report.meta.json", meta.dump(2) + "\n");
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.error = std::string("error: kind=io msg=\"") + e.what() + "\"";
    return out;
  }

  out.inconclusive = run.inconclusive;
  if (run.inconclusive && cfg.strict) out.exit_code = 2;
  return out;
}

RunOutcome run_experiment_file(const std::string& config_path, const RunOverrides& ov) {
  RunOutcome out;
  ExperimentConfig cfg;
  try {
    ConfigTable table = ConfigTable::load_file(config_path);
    if (ov.seed) table.set("numerics.seed", std::to_string(*ov.seed));
    if (ov.threads) table.set("numerics.threads", std::to_string(*ov.threads));
    if (ov.out_dir) table.set("output.dir", *ov.out_dir);
    cfg = bind_config(table);
  } catch (const ConfigError& e) {
    out.exit_code = 1;
    out.error = std::string("error: kind=config field=") + e.field + " msg=\"" + e.what() + "\"";
    return out;
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.error = std::string("error: kind=config msg=\"") + e.what() + "\"";
    return out;
  }
  cfg.strict = ov.strict;
  cfg.dump_paths = ov.dump_paths;
  return run_experiment(std::move(cfg));
}

}  // namespace slm
