#include "slm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "slm/report.hpp"

namespace slm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

void flatten_json(const nlohmann::json& j, const std::string& prefix,
                  std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items())
      flatten_json(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array()) {
    std::string list;
    for (const auto& v : j) {
      if (!list.empty()) list += ",";
      if (v.is_string())
        list += v.get<std::string>();
      else
        list += v.dump();
    }
    out[prefix] = list;
  } else if (j.is_string()) {
    out[prefix] = j.get<std::string>();
  } else {
    out[prefix] = j.dump();
  }
}

}  // namespace

ConfigTable ConfigTable::parse_text(const std::string& content) {
  ConfigTable t;
  std::istringstream in(content);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // comments: '#' outside quotes
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no), "has an unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no), "is not a key = value pair");
    std::string key = trim(line.substr(0, eq));
    std::string value = strip_quotes(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "has an empty key");
    if (!section.empty()) key = section + "." + key;
    t.kv_[key] = value;
  }
  return t;
}

ConfigTable ConfigTable::parse_json(const std::string& content) {
  ConfigTable t;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const std::exception& e) {
    throw ConfigError("<json>", std::string("failed to parse: ") + e.what());
  }
  flatten_json(j, "", t.kv_);
  return t;
}

ConfigTable ConfigTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    return parse_json(content);
  return parse_text(content);
}

std::string ConfigTable::get_string(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError(key, "is required");
  return it->second;
}

std::string ConfigTable::get_string(const std::string& key,
                                    const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

namespace {

double parse_number(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
  if (v == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "must be a number (got '" + raw + "')");
  }
}

}  // namespace

double ConfigTable::get_number(const std::string& key) const {
  return parse_number(key, get_string(key));
}

double ConfigTable::get_number(const std::string& key, double fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : parse_number(key, it->second);
}

long long ConfigTable::get_int(const std::string& key) const {
  const double x = get_number(key);
  if (std::floor(x) != x) throw ConfigError(key, "must be an integer");
  return (long long)x;
}

long long ConfigTable::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool ConfigTable::get_bool(const std::string& key, bool fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string v = trim(it->second);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "must be a boolean");
}

std::vector<std::string> ConfigTable::get_string_list(const std::string& key) const {
  std::vector<std::string> out;
  std::string raw = get_string(key);
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> ConfigTable::get_number_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_string_list(key)) out.push_back(parse_number(key, s));
  return out;
}

std::vector<std::pair<std::string, double>> ConfigTable::params_below(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, double>> out;
  const std::string p = prefix + ".";
  for (const auto& [k, v] : kv_) {
    if (k.rfind(p, 0) == 0 && k.find('.', p.size()) == std::string::npos)
      out.emplace_back(k.substr(p.size()), parse_number(k, v));
  }
  return out;
}

std::string ConfigTable::canonical() const {
  std::string out;
  for (const auto& [k, v] : kv_) {
    out += k;
    out += "=";
    out += v;
    out += "\n";
  }
  return out;
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::analyze: return "analyze";
    case ExperimentKind::feller: return "feller";
    case ExperimentKind::simulate: return "simulate";
    case ExperimentKind::defect: return "defect";
    case ExperimentKind::compare: return "compare";
    case ExperimentKind::jumps: return "jumps";
    case ExperimentKind::validate_q: return "validate-q";
  }
  return "?";
}

namespace {

ExperimentKind parse_experiment(const std::string& name) {
  if (name == "analyze") return ExperimentKind::analyze;
  if (name == "feller") return ExperimentKind::feller;
  if (name == "simulate") return ExperimentKind::simulate;
  if (name == "defect") return ExperimentKind::defect;
  if (name == "compare") return ExperimentKind::compare;
  if (name == "jumps") return ExperimentKind::jumps;
  if (name == "validate-q" || name == "validate_q") return ExperimentKind::validate_q;
  throw ConfigError("experiment", "unknown experiment '" + name + "'");
}

CoefficientFunction bind_coefficient(const ConfigTable& t, const std::string& key) {
  const std::string family = t.get_string(key);
  try {
    return coeff::make(family, t.params_below(key));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

VolatilityModelSpec bind_model(const ConfigTable& t) {
  const std::string family = t.get_string("model.family", "basic");
  const double rho = t.get_number("model.rho", 0.0);
  const double S0 = t.get_number("model.S0", 1.0);
  const double v0 = t.get_number("model.v0", 1.0);
  const double T = t.get_number("model.T", 1.0);
  try {
    if (family == "basic") {
      return VolatilityModelSpec::basic(bind_coefficient(t, "model.mu"),
                                        bind_coefficient(t, "model.b"), rho, S0, v0, T);
    }
    if (family == "power") {
      return make_power_family(t.get_number("model.alpha"), t.get_number("model.beta"),
                               t.get_number("model.gamma"), t.get_number("model.delta"),
                               bind_coefficient(t, "model.b"), rho, S0, v0, T);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model", e.what());
  }
  throw ConfigError("model.family", "must be 'basic' or 'power'");
}

std::optional<EnlargementConfig> bind_enlargement(const ConfigTable& t) {
  const std::string kind = t.get_string("enlargement.kind", "none");
  if (kind == "none") return std::nullopt;
  EnlargementConfig cfg;
  if (kind == "brownian_terminal")
    cfg.spec.kind = EnlargementKind::brownian_terminal;
  else if (kind == "hitting_time")
    cfg.spec.kind = EnlargementKind::hitting_time;
  else if (kind == "finite_partition")
    cfg.spec.kind = EnlargementKind::finite_partition;
  else if (kind == "independent")
    cfg.spec.kind = EnlargementKind::independent;
  else
    throw ConfigError("enlargement.kind", "unknown kind '" + kind + "'");

  cfg.spec.hitting_level = t.get_number("enlargement.hitting_level", 1.0);
  cfg.spec.hitting_cap_multiple = t.get_number("enlargement.hitting_cap_multiple", 256.0);
  cfg.spec.partition_threshold = t.get_number("enlargement.partition_threshold", 0.0);
  cfg.spec.delta_guard = t.get_number("numerics.delta_guard", -1.0);
  if (cfg.spec.kind == EnlargementKind::hitting_time && !(cfg.spec.hitting_level > 0.0))
    throw ConfigError("enlargement.hitting_level", "must be > 0");

  const std::string rule = t.get_string("enlargement.allocation", "J_zero");
  if (rule == "J_zero")
    cfg.alloc.rule = AllocationRule::J_zero;
  else if (rule == "H_zero")
    cfg.alloc.rule = AllocationRule::H_zero;
  else if (rule == "split")
    cfg.alloc.rule = AllocationRule::split;
  else
    throw ConfigError("enlargement.allocation", "must be J_zero, H_zero or split");
  cfg.alloc.split_theta = t.get_number("enlargement.split_theta", 0.5);
  return cfg;
}

}  // namespace

ExperimentConfig bind_config(const ConfigTable& t) {
  ExperimentConfig cfg;
  cfg.experiment = parse_experiment(t.get_string("experiment"));
  cfg.model = bind_model(t);
  cfg.enlargement = bind_enlargement(t);

  if (!t.has("numerics.seed")) throw ConfigError("numerics.seed", "is required (no wall-clock default)");
  const long long seed = t.get_int("numerics.seed");
  if (seed < 0) throw ConfigError("numerics.seed", "must be >= 0");
  cfg.numerics.seed = (std::uint64_t)seed;

  cfg.t_eval = t.get_number("numerics.t_eval", cfg.model.T);
  if (!(cfg.t_eval > 0.0)) throw ConfigError("numerics.t_eval", "must be > 0");
  const long long n_steps = t.get_int("numerics.n_steps", 256);
  if (n_steps <= 0) throw ConfigError("numerics.n_steps", "must be positive");
  cfg.numerics.grid = TimeGrid{cfg.t_eval, (std::size_t)n_steps};

  const long long n_paths = t.get_int("numerics.n_paths", 100000);
  if (n_paths <= 0) throw ConfigError("numerics.n_paths", "must be positive");
  cfg.numerics.n_paths = (std::size_t)n_paths;

  const std::string scheme = t.get_string("numerics.scheme", "euler");
  if (scheme == "euler")
    cfg.numerics.sim.scheme = Scheme::euler;
  else if (scheme == "milstein")
    cfg.numerics.sim.scheme = Scheme::milstein;
  else
    throw ConfigError("numerics.scheme", "must be euler or milstein");

  if (t.get_bool("numerics.zero_noise", false)) cfg.numerics.sim.noise = NoiseMode::zeros;

  cfg.numerics.eps1 = t.get_number("numerics.eps1", 0.05);
  cfg.numerics.eps2 = t.get_number("numerics.eps2", 1.0);
  if (cfg.enlargement && cfg.enlargement->spec.kind != EnlargementKind::independent) {
    if (!(cfg.numerics.eps1 > 0.0)) throw ConfigError("numerics.eps1", "must be > 0");
    if (!(cfg.numerics.eps2 > 0.0)) throw ConfigError("numerics.eps2", "must be > 0");
  }

  const double conf = t.get_number("numerics.confidence", 0.95);
  if (conf == 0.90)
    cfg.numerics.confidence_z = 1.645;
  else if (conf == 0.95)
    cfg.numerics.confidence_z = 1.96;
  else if (conf == 0.99)
    cfg.numerics.confidence_z = 2.576;
  else
    throw ConfigError("numerics.confidence", "must be one of 0.90, 0.95, 0.99");

  if (t.has("numerics.barrier")) {
    try {
      cfg.numerics.barrier = ExplosionBarrier::make(t.get_number_list("numerics.barrier"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("numerics.barrier", e.what());
    }
  }

  const long long threads = t.get_int("numerics.threads", 1);
  if (threads <= 0) throw ConfigError("numerics.threads", "must be positive");
  cfg.numerics.threads = (unsigned)threads;
  cfg.numerics.antithetic = t.get_bool("numerics.antithetic", false);
  cfg.numerics.confirm_at_half_h = t.get_bool("numerics.confirm_half_h", true);

  // phi
  const double phi_p = t.get_number("phi.power", 2.0);
  const double phi_a = t.get_number("phi.a", 1.0);
  try {
    cfg.phi = PhiFunction::power(phi_p, phi_a);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("phi", e.what());
  }

  cfg.feller_lower = t.get_number("feller.lower", 0.0);
  cfg.feller_upper = t.get_number("feller.upper", std::numeric_limits<double>::infinity());
  cfg.feller_c = t.get_number("feller.c", std::max(cfg.model.v0, cfg.feller_lower + 1.0));

  if (t.has("compare.h_exponents")) {
    cfg.compare.h_exponents.clear();
    for (double e : t.get_number_list("compare.h_exponents"))
      cfg.compare.h_exponents.push_back((int)e);
  }
  cfg.compare.pair = t.get_string("compare.pair", "enlargement_floor");
  if (cfg.compare.pair != "enlargement_floor" && cfg.compare.pair != "gap")
    throw ConfigError("compare.pair", "must be 'enlargement_floor' or 'gap'");

  if (cfg.experiment == ExperimentKind::jumps) {
    JumpExperimentConfig jc;
    const double intensity = t.get_number("jumps.intensity", 1.0);
    std::vector<std::pair<double, double>> law;
    if (t.has("jumps.sizes")) {
      for (const auto& item : t.get_string_list("jumps.sizes")) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
          throw ConfigError("jumps.sizes", "entries must be size:probability");
        law.emplace_back(parse_number("jumps.sizes", item.substr(0, colon)),
                         parse_number("jumps.sizes", item.substr(colon + 1)));
      }
    } else if (intensity > 0.0) {
      law = {{1.0, 1.0}};
    }
    try {
      jc.driver = JumpDriver::compound_poisson(intensity, std::move(law),
                                               t.get_number("jumps.brownian_rate", 0.0));
      jc.alpha_exp = t.get_number("jumps.alpha", 1.0);
      if (!(jc.alpha_exp > 0.0)) throw ConfigError("jumps.alpha", "must be > 0");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError("jumps", e.what());
    }
    cfg.jump = std::move(jc);
  }

  if (t.has("validate_q.h_levels")) {
    for (double m : t.get_number_list("validate_q.h_levels")) cfg.h_schedule.push_back({m, m});
  } else {
    cfg.h_schedule = default_h_schedule();
  }

  cfg.output.dir = t.get_string("output.dir", "out");
  if (t.has("output.formats")) {
    cfg.output.json = cfg.output.csv = false;
    for (const auto& f : t.get_string_list("output.formats")) {
      if (f == "json")
        cfg.output.json = true;
      else if (f == "csv")
        cfg.output.csv = true;
      else
        throw ConfigError("output.formats", "unknown format '" + f + "'");
    }
  }

  cfg.config_hash = hex64(fnv1a64(t.canonical()));
  return cfg;
}

}  // namespace slm
