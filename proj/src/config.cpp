#include "daepinn/config.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "daepinn/errors.hpp"
#include "daepinn/text_io.hpp"

namespace daepinn {

namespace {

[[noreturn]] void fail(const std::string& what, int line) {
  throw ParseError(line > 0 ? "line " + std::to_string(line) + ": " + what : what, line);
}

const char* kind_name(ConfigValue::Kind k) {
  switch (k) {
    case ConfigValue::Kind::String: return "string";
    case ConfigValue::Kind::Int: return "integer";
    case ConfigValue::Kind::Float: return "float";
    case ConfigValue::Kind::Bool: return "bool";
    case ConfigValue::Kind::List: return "list";
  }
  return "?";
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

class ValueReader {
 public:
  ValueReader(const std::string& s, int line) : s_(s), line_(line) {}

  ConfigValue read_all() {
    ConfigValue v = read();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after value", line_);
    return v;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  ConfigValue read() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value", line_);
    ConfigValue v;
    v.line = line_;
    const char c = s_[pos_];
    if (c == '"') {
      v.kind = ConfigValue::Kind::String;
      ++pos_;
      while (true) {
        if (pos_ >= s_.size()) fail("unterminated string", line_);
        const char ch = s_[pos_++];
        if (ch == '"') break;
        if (ch == '\\') {
          if (pos_ >= s_.size()) fail("unterminated string", line_);
          const char e = s_[pos_++];
          if (e == 'n') {
            v.str += '\n';
          } else if (e == '"' || e == '\\') {
            v.str += e;
          } else {
            fail(std::string("unknown escape \\") + e, line_);
          }
        } else {
          v.str += ch;
        }
      }
      return v;
    }
    if (c == '[') {
      v.kind = ConfigValue::Kind::List;
      ++pos_;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      while (true) {
        v.list.push_back(read());
        if (v.list.back().kind == ConfigValue::Kind::List) fail("nested lists are not supported", line_);
        skip_ws();
        if (pos_ >= s_.size()) fail("unterminated list", line_);
        if (s_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (s_[pos_] == ']') {
          ++pos_;
          break;
        }
        fail("expected ',' or ']' in list", line_);
      }
      return v;
    }
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && !std::isspace(static_cast<unsigned char>(s_[end]))) {
      ++end;
    }
    const std::string tok = s_.substr(pos_, end - pos_);
    pos_ = end;
    if (tok == "true" || tok == "false") {
      v.kind = ConfigValue::Kind::Bool;
      v.boolean = tok == "true";
      return v;
    }
    bool integral = !tok.empty();
    for (std::size_t i = 0; i < tok.size(); ++i) {
      const char ch = tok[i];
      if (!(std::isdigit(static_cast<unsigned char>(ch)) || (i == 0 && (ch == '-' || ch == '+')))) integral = false;
    }
    if (integral && tok != "-" && tok != "+") {
      v.kind = ConfigValue::Kind::Int;
      try {
        v.integer = std::stoll(tok);
      } catch (const std::exception&) {
        fail("integer out of range: " + tok, line_);
      }
      return v;
    }
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(tok, &used);
    } catch (const std::exception&) {
      fail("not a value: '" + tok + "' (strings need quotes)", line_);
    }
    if (used != tok.size() || !std::isfinite(d)) fail("not a value: '" + tok + "'", line_);
    v.kind = ConfigValue::Kind::Float;
    v.real = d;
    return v;
  }

  const std::string& s_;
  int line_;
  std::size_t pos_ = 0;
};

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  }
  return true;
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_str) {
      ++i;
    } else if (line[i] == '"') {
      in_str = !in_str;
    } else if (line[i] == '#' && !in_str) {
      return line.substr(0, i);
    }
  }
  return line;
}

ConfigEntry parse_assignment(const std::string& section, const std::string& body, int line) {
  const auto eq = body.find('=');
  if (eq == std::string::npos) fail("expected key = value", line);
  ConfigEntry e{section, trim(body.substr(0, eq)), {}};
  if (!valid_name(e.key)) fail("bad key '" + e.key + "'", line);
  e.value = ValueReader(trim(body.substr(eq + 1)), line).read_all();
  return e;
}

}  // namespace

std::string ConfigValue::as_string(const std::string& key) const {
  if (kind != Kind::String) fail(key + ": expected string, got " + kind_name(kind), line);
  return str;
}

long long ConfigValue::as_int(const std::string& key) const {
  if (kind != Kind::Int) fail(key + ": expected integer, got " + kind_name(kind), line);
  return integer;
}

double ConfigValue::as_double(const std::string& key) const {
  if (kind == Kind::Int) return static_cast<double>(integer);
  if (kind != Kind::Float) fail(key + ": expected number, got " + kind_name(kind), line);
  return real;
}

bool ConfigValue::as_bool(const std::string& key) const {
  if (kind != Kind::Bool) fail(key + ": expected bool, got " + kind_name(kind), line);
  return boolean;
}

std::vector<double> ConfigValue::as_doubles(const std::string& key) const {
  if (kind != Kind::List) fail(key + ": expected list, got " + kind_name(kind), line);
  std::vector<double> out;
  for (const ConfigValue& v : list) out.push_back(v.as_double(key));
  return out;
}

std::vector<long long> ConfigValue::as_ints(const std::string& key) const {
  if (kind != Kind::List) fail(key + ": expected list, got " + kind_name(kind), line);
  std::vector<long long> out;
  for (const ConfigValue& v : list) out.push_back(v.as_int(key));
  return out;
}

std::vector<std::string> ConfigValue::as_strings(const std::string& key) const {
  if (kind != Kind::List) fail(key + ": expected list, got " + kind_name(kind), line);
  std::vector<std::string> out;
  for (const ConfigValue& v : list) out.push_back(v.as_string(key));
  return out;
}

std::vector<ConfigEntry> parse_config_text(const std::string& text) {
  std::vector<ConfigEntry> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string body = trim(strip_comment(raw));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') fail("malformed section header", line);
      section = trim(body.substr(1, body.size() - 2));
      if (!valid_name(section)) fail("bad section name '" + section + "'", line);
      continue;
    }
    if (section.empty()) fail("assignment outside any section", line);
    ConfigEntry e = parse_assignment(section, body, line);
    if (!seen.insert({section, e.key}).second) fail("duplicate key " + section + "." + e.key, line);
    out.push_back(std::move(e));
  }
  return out;
}

ConfigEntry parse_override(const std::string& text) {
  const auto eq = text.find('=');
  const std::string path = trim(text.substr(0, eq == std::string::npos ? text.size() : eq));
  const auto dot = path.rfind('.');
  if (eq == std::string::npos || dot == std::string::npos || dot == 0) {
    fail("override '" + text + "' is not section.key=value", 0);
  }
  return parse_assignment(path.substr(0, dot), path.substr(dot + 1) + " =" + text.substr(eq + 1), 0);
}

ThreeBusParams resolve_three_bus(const ModelSpec& spec) {
  ThreeBusParams p;
  if (spec.preset == "stable_benchmark") {
    p = ThreeBusParams::stable_benchmark();
  } else if (spec.preset != "as_printed") {
    throw InvalidArgument("unknown model preset '" + spec.preset + "'");
  }
  if (!spec.load_convention.empty()) p.load_convention = load_convention_from_string(spec.load_convention);
  for (const auto& [k, v] : spec.overrides) p.set(k, v);
  return p;
}

SemiExplicitDAE build_model(const ModelSpec& spec) {
  if (spec.name == "three_bus") return three_bus(resolve_three_bus(spec));
  if (spec.name == "linear") return linear_test_dae();
  throw InvalidArgument("unknown model '" + spec.name + "'");
}

nlohmann::json model_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["preset"] = spec.preset;
  j["load_convention"] = spec.load_convention;
  nlohmann::json ov = nlohmann::json::array();
  for (const auto& [k, v] : spec.overrides) ov.push_back({k, v});
  j["overrides"] = ov;
  if (spec.name == "three_bus") {
    const ThreeBusParams p = resolve_three_bus(spec);
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : p.named_values()) params[k] = v;
    j["resolved"] = params;
    j["resolved_load_convention"] = to_string(p.load_convention);
  }
  return j;
}

ModelSpec model_from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    s.name = j.at("name").get<std::string>();
    s.preset = j.at("preset").get<std::string>();
    s.load_convention = j.at("load_convention").get<std::string>();
    for (const auto& e : j.at("overrides")) s.overrides.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model description: ") + e.what());
  }
}

namespace {

int as_small_int(const ConfigValue& v, const std::string& key) {
  const long long i = v.as_int(key);
  if (i < -2147483647LL || i > 2147483647LL) fail(key + ": out of range", v.line);
  return static_cast<int>(i);
}

std::uint64_t as_seed(const ConfigValue& v, const std::string& key) {
  const long long i = v.as_int(key);
  if (i < 0) fail(key + ": seeds must be non-negative", v.line);
  return static_cast<std::uint64_t>(i);
}

Eigen::VectorXd as_vector(const ConfigValue& v, const std::string& key) {
  const std::vector<double> d = v.as_doubles(key);
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

void apply(ExperimentConfig& c, const ConfigEntry& e) {
  const std::string& s = e.section;
  const std::string& k = e.key;
  const ConfigValue& v = e.value;
  const std::string name = s + "." + k;
  auto unknown = [&] { fail("unknown key " + name, v.line); };
  if (s == "manifest") return;
  if (s == "model") {
    if (k == "name") c.model.name = v.as_string(name);
    else if (k == "preset") c.model.preset = v.as_string(name);
    else if (k == "load_convention") c.model.load_convention = v.as_string(name);
    else unknown();
  } else if (s == "model.params") {
    const double x = v.as_double(name);
    try {
      ThreeBusParams probe;
      probe.set(k, x);
    } catch (const InvalidArgument& err) {
      fail(err.what(), v.line);
    }
    bool replaced = false;
    for (auto& [key, val] : c.model.overrides) {
      if (key == k) {
        val = x;
        replaced = true;
      }
    }
    if (!replaced) c.model.overrides.emplace_back(k, x);
  } else if (s == "discretization") {
    if (k == "scheme") {
      try {
        c.scheme = scheme_from_string(v.as_string(name));
      } catch (const InvalidArgument& err) {
        fail(err.what(), v.line);
      }
    } else if (k == "stages") c.stages = as_small_int(v, name);
    else if (k == "h") c.h = v.as_double(name);
    else if (k == "tableau_file") c.tableau_file = v.as_string(name);
    else unknown();
  } else if (s == "network") {
    if (k == "mode") {
      try {
        c.arch.mode = assembly_mode_from_string(v.as_string(name));
      } catch (const InvalidArgument& err) {
        fail(err.what(), v.line);
      }
    } else if (k == "y_width") c.arch.y_width = as_small_int(v, name);
    else if (k == "y_depth") c.arch.y_depth = as_small_int(v, name);
    else if (k == "z_width") c.arch.z_width = as_small_int(v, name);
    else if (k == "z_depth") c.arch.z_depth = as_small_int(v, name);
    else unknown();
  } else if (s == "training") {
    TrainConfig& t = c.train;
    if (k == "epochs_per_outer") t.epochs_per_outer = v.as_int(name);
    else if (k == "K") t.K = as_small_int(v, name);
    else if (k == "w_f0") t.w_f0 = v.as_double(name);
    else if (k == "w_g0") t.w_g0 = v.as_double(name);
    else if (k == "beta") t.beta = v.as_double(name);
    else if (k == "convergence_tol") t.convergence_tol = v.as_double(name);
    else if (k == "lr0") t.lr0 = v.as_double(name);
    else if (k == "plateau_window") t.plateau.window = v.as_int(name);
    else if (k == "plateau_factor") t.plateau.factor = v.as_double(name);
    else if (k == "plateau_min_lr") t.plateau.min_lr = v.as_double(name);
    else if (k == "plateau_threshold") t.plateau.threshold = v.as_double(name);
    else if (k == "train_size") t.train_size = as_small_int(v, name);
    else if (k == "test_size") t.test_size = as_small_int(v, name);
    else if (k == "eval_every") t.eval_every = v.as_int(name);
    else if (k == "ic_lo") t.ic_lo = as_vector(v, name);
    else if (k == "ic_hi") t.ic_hi = as_vector(v, name);
    else unknown();
  } else if (s == "seeds") {
    if (k == "data") c.train.data_seed = as_seed(v, name);
    else if (k == "init") c.train.init_seed = as_seed(v, name);
    else unknown();
  } else if (s == "evaluation") {
    EvalSpec& ev = c.eval;
    if (k == "steps") ev.steps = as_small_int(v, name);
    else if (k == "ensemble") ev.ensemble = as_small_int(v, name);
    else if (k == "truth") {
      const std::string t = v.as_string(name);
      if (t != "oracle" && t != "none") fail(name + ": expected \"oracle\" or \"none\"", v.line);
      ev.truth = t == "oracle";
    } else if (k == "oracle_scheme") {
      try {
        ev.oracle_scheme = scheme_from_string(v.as_string(name));
      } catch (const InvalidArgument& err) {
        fail(err.what(), v.line);
      }
    } else if (k == "oracle_stages") ev.oracle_stages = as_small_int(v, name);
    else if (k == "oracle_h") ev.oracle_h = v.as_double(name);
    else if (k == "newton_tol") ev.newton_tol = v.as_double(name);
    else if (k == "newton_max_iter") ev.newton_max_iter = as_small_int(v, name);
    else if (k == "z_guess") ev.z_guess = v.as_doubles(name);
    else unknown();
  } else if (s == "grid") {
    GridSpec& g = c.grid;
    if (k == "y_width") g.y_width = v.as_ints(name);
    else if (k == "y_depth") g.y_depth = v.as_ints(name);
    else if (k == "z_width") g.z_width = v.as_ints(name);
    else if (k == "z_depth") g.z_depth = v.as_ints(name);
    else if (k == "train_size") g.train_size = v.as_ints(name);
    else if (k == "mode") g.mode = v.as_strings(name);
    else if (k == "max_points") g.max_points = as_small_int(v, name);
    else unknown();
  } else if (s == "output") {
    if (k == "dir") c.output_dir = v.as_string(name);
    else unknown();
  } else {
    fail("unknown section [" + s + "]", v.line);
  }
}

std::string q(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    out += ch;
  }
  return out + "\"";
}

std::string f(double v) {
  std::string s = fmt17(v);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string flist(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + f(v[i]);
  return out + "]";
}

std::string flist(const Eigen::VectorXd& v) { return flist(std::vector<double>(v.data(), v.data() + v.size())); }

std::string ilist(const std::vector<long long>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out + "]";
}

std::string slist(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + q(v[i]);
  return out + "]";
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& text, const std::vector<std::string>& overrides) {
  ExperimentConfig c;
  for (const ConfigEntry& e : parse_config_text(text)) apply(c, e);
  for (const std::string& o : overrides) apply(c, parse_override(o));
  if (c.train.ic_lo.size() == 0 && c.model.name == "three_bus") default_three_bus_ranges(c.train.ic_lo, c.train.ic_hi);
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  return parse_experiment(read_text_file(path), overrides);
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[model]\nname = " << q(c.model.name) << "\npreset = " << q(c.model.preset)
    << "\nload_convention = " << q(c.model.load_convention) << "\n";
  if (!c.model.overrides.empty()) {
    o << "\n[model.params]\n";
    for (const auto& [k, v] : c.model.overrides) o << k << " = " << f(v) << "\n";
  }
  o << "\n[discretization]\nscheme = " << q(to_string(c.scheme)) << "\nstages = " << c.stages << "\nh = " << f(c.h)
    << "\ntableau_file = " << q(c.tableau_file) << "\n";
  o << "\n[network]\nmode = " << q(to_string(c.arch.mode)) << "\ny_width = " << c.arch.y_width
    << "\ny_depth = " << c.arch.y_depth << "\nz_width = " << c.arch.z_width << "\nz_depth = " << c.arch.z_depth
    << "\n";
  const TrainConfig& t = c.train;
  o << "\n[training]\nepochs_per_outer = " << t.epochs_per_outer << "\nK = " << t.K << "\nw_f0 = " << f(t.w_f0)
    << "\nw_g0 = " << f(t.w_g0) << "\nbeta = " << f(t.beta) << "\nconvergence_tol = " << f(t.convergence_tol)
    << "\nlr0 = " << f(t.lr0) << "\nplateau_window = " << t.plateau.window
    << "\nplateau_factor = " << f(t.plateau.factor) << "\nplateau_min_lr = " << f(t.plateau.min_lr)
    << "\nplateau_threshold = " << f(t.plateau.threshold) << "\ntrain_size = " << t.train_size
    << "\ntest_size = " << t.test_size << "\neval_every = " << t.eval_every << "\n";
  if (t.ic_lo.size() > 0) o << "ic_lo = " << flist(t.ic_lo) << "\nic_hi = " << flist(t.ic_hi) << "\n";
  o << "\n[seeds]\ndata = " << t.data_seed << "\ninit = " << t.init_seed << "\n";
  const EvalSpec& e = c.eval;
  o << "\n[evaluation]\nsteps = " << e.steps << "\nensemble = " << e.ensemble
    << "\ntruth = " << q(e.truth ? "oracle" : "none") << "\noracle_scheme = " << q(to_string(e.oracle_scheme))
    << "\noracle_stages = " << e.oracle_stages << "\noracle_h = " << f(e.oracle_h)
    << "\nnewton_tol = " << f(e.newton_tol) << "\nnewton_max_iter = " << e.newton_max_iter
    << "\nz_guess = " << flist(e.z_guess) << "\n";
  const GridSpec& g = c.grid;
  o << "\n[grid]\ny_width = " << ilist(g.y_width) << "\ny_depth = " << ilist(g.y_depth)
    << "\nz_width = " << ilist(g.z_width) << "\nz_depth = " << ilist(g.z_depth)
    << "\ntrain_size = " << ilist(g.train_size) << "\nmode = " << slist(g.mode) << "\nmax_points = " << g.max_points
    << "\n";
  o << "\n[output]\ndir = " << q(c.output_dir) << "\n";
  return o.str();
}

ButcherTableau resolve_tableau(const ExperimentConfig& c) {
  if (!c.tableau_file.empty()) return load_tableau(c.tableau_file);
  return make_tableau(c.scheme, c.scheme == Scheme::BackwardEuler ? 1 : c.stages);
}

SolverConfig resolve_oracle(const ExperimentConfig& c) {
  SolverConfig s;
  const EvalSpec& e = c.eval;
  s.tableau = make_tableau(e.oracle_scheme, e.oracle_scheme == Scheme::BackwardEuler ? 1 : e.oracle_stages);
  s.h_ref = e.oracle_h;
  s.newton_tol = e.newton_tol;
  s.newton_max_iter = e.newton_max_iter;
  return s;
}

Eigen::VectorXd resolve_z_guess(const ExperimentConfig& c, int m) {
  if (c.eval.z_guess.empty()) return Eigen::VectorXd::Ones(m);
  if (static_cast<int>(c.eval.z_guess.size()) != m) {
    throw InvalidArgument("evaluation.z_guess needs " + std::to_string(m) + " entries");
  }
  return Eigen::Map<const Eigen::VectorXd>(c.eval.z_guess.data(), m);
}

std::string manifest_text(const ExperimentConfig& c, const std::string& subcommand,
                          const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ostringstream o;
  o << to_text(c) << "\n[manifest]\nsubcommand = " << q(subcommand) << "\nversion = " << q("1.0.0")
    << "\ndata_seed = " << c.train.data_seed << "\ninit_seed = " << c.train.init_seed << "\n";
  for (const auto& [k, v] : extra) o << k << " = " << q(v) << "\n";
  return o.str();
}

}  // namespace daepinn
