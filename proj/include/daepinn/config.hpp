#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "daepinn/reference_solver.hpp"
#include "daepinn/trainer.hpp"

namespace daepinn {

/// One typed value of the config format: "string", 12, 1.5, true, [a, b].
struct ConfigValue {
  enum class Kind { String, Int, Float, Bool, List };
  Kind kind = Kind::String;
  std::string str;
  long long integer = 0;
  double real = 0.0;
  bool boolean = false;
  std::vector<ConfigValue> list;
  int line = 0;

  std::string as_string(const std::string& key) const;
  long long as_int(const std::string& key) const;
  double as_double(const std::string& key) const;  // ints widen
  bool as_bool(const std::string& key) const;
  std::vector<double> as_doubles(const std::string& key) const;
  std::vector<long long> as_ints(const std::string& key) const;
  std::vector<std::string> as_strings(const std::string& key) const;
};

struct ConfigEntry {
  std::string section;
  std::string key;
  ConfigValue value;
};

/// Lines are `[section]`, `key = value` or blank; `#` starts a comment.
/// Duplicate keys within a section are rejected.
std::vector<ConfigEntry> parse_config_text(const std::string& text);

/// `section.key=value` with the value in config syntax.
ConfigEntry parse_override(const std::string& text);

struct ModelSpec {
  std::string name = "three_bus";     // three_bus | linear
  std::string preset = "as_printed";  // as_printed | stable_benchmark
  std::string load_convention;        // empty: preset's choice
  std::vector<std::pair<std::string, double>> overrides;
};

ThreeBusParams resolve_three_bus(const ModelSpec& spec);
SemiExplicitDAE build_model(const ModelSpec& spec);
nlohmann::json model_to_json(const ModelSpec& spec);
ModelSpec model_from_json(const nlohmann::json& j);

struct EvalSpec {
  int steps = 80;
  int ensemble = 100;
  bool truth = true;
  Scheme oracle_scheme = Scheme::GaussLegendre;
  int oracle_stages = 3;
  double oracle_h = 1e-3;
  double newton_tol = 1e-12;
  int newton_max_iter = 50;
  std::vector<double> z_guess;  // empty: 1.0 per algebraic state
};

struct GridSpec {
  std::vector<long long> y_width, y_depth, z_width, z_depth, train_size;
  std::vector<std::string> mode;
  int max_points = 64;
};

struct ExperimentConfig {
  ModelSpec model;
  Scheme scheme = Scheme::GaussLegendre;
  int stages = 100;
  std::string tableau_file;  // overrides scheme/stages when set
  double h = 0.1;
  ArchitectureSpec arch;
  TrainConfig train;
  EvalSpec eval;
  GridSpec grid;
  std::string output_dir;
};

/// Parses a config, then applies overrides in order. Unknown sections or keys
/// and ill-typed values raise ParseError with the offending line.
ExperimentConfig parse_experiment(const std::string& text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Every field, resolved; parse_experiment(to_text(c)) == c.
std::string to_text(const ExperimentConfig& c);

ButcherTableau resolve_tableau(const ExperimentConfig& c);
SolverConfig resolve_oracle(const ExperimentConfig& c);
Eigen::VectorXd resolve_z_guess(const ExperimentConfig& c, int m);

/// to_text(c) followed by a [manifest] section, which parse_experiment skips.
std::string manifest_text(const ExperimentConfig& c, const std::string& subcommand,
                          const std::vector<std::pair<std::string, std::string>>& extra = {});

}  // namespace daepinn
