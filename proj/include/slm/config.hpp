#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slm/coeffs.hpp"
#include "slm/jumps.hpp"
#include "slm/stats.hpp"

namespace slm {

struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string field_name, const std::string& reason)
      : std::runtime_error("config field '" + field_name + "' " + reason),
        field(std::move(field_name)) {}
};

// Flattened key/value view of a config file. Text format: [section] headers,
// `key = value` lines, dotted keys for nesting, '#' comments. JSON files with
// the same nesting are accepted as an alternative.
class ConfigTable {
 public:
  static ConfigTable parse_text(const std::string& content);
  static ConfigTable parse_json(const std::string& content);
  static ConfigTable load_file(const std::string& path);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_number(const std::string& key) const;
  double get_number(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_number_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  // numeric parameters below a dotted prefix, e.g. model.mu.* -> {rho: 0.5}
  std::vector<std::pair<std::string, double>> params_below(const std::string& prefix) const;

  // canonical "key=value" lines sorted by key; the basis of the config hash
  std::string canonical() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

 private:
  std::map<std::string, std::string> kv_;
};

enum class ExperimentKind { analyze, feller, simulate, defect, compare, jumps, validate_q };

std::string to_string(ExperimentKind k);

struct OutputConfig {
  std::string dir = "out";
  bool json = true;
  bool csv = true;
};

struct CompareConfig {
  std::vector<int> h_exponents{6, 8, 10};
  std::string pair = "enlargement_floor";  // "gap" | "enlargement_floor"
};

struct JumpExperimentConfig {
  JumpDriver driver;
  double alpha_exp = 1.0;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::analyze;
  VolatilityModelSpec model;
  std::optional<EnlargementConfig> enlargement;
  PhiFunction phi;
  DefectNumerics numerics;
  double t_eval = 1.0;
  double feller_lower = 0.0;
  double feller_upper = std::numeric_limits<double>::infinity();
  double feller_c = 1.0;
  CompareConfig compare;
  std::optional<JumpExperimentConfig> jump;
  std::vector<std::pair<double, double>> h_schedule;  // validate-q levels
  OutputConfig output;
  bool strict = false;
  bool dump_paths = false;
  std::string config_hash;  // hex of the canonical table hash
};

// Binds and validates the flat table into a typed config. Throws ConfigError
// naming the offending field. The seed is mandatory.
ExperimentConfig bind_config(const ConfigTable& table);

}  // namespace slm
