#include "daepinn/network.hpp"

#include <cmath>
#include <random>

#include "daepinn/errors.hpp"
#include "daepinn/json_io.hpp"
#include "daepinn/text_io.hpp"

namespace daepinn {

using ad::Var;
using nlohmann::json;

std::string to_string(OutputFeature f) {
  return f == OutputFeature::Softplus ? "softplus" : "identity";
}

OutputFeature output_feature_from_string(const std::string& s) {
  if (s == "identity") return OutputFeature::Identity;
  if (s == "softplus") return OutputFeature::Softplus;
  throw InvalidArgument("unknown output feature '" + s + "'");
}

std::string to_string(AssemblyMode m) { return m == AssemblyMode::Stacked ? "stacked" : "unstacked"; }

AssemblyMode assembly_mode_from_string(const std::string& s) {
  if (s == "unstacked") return AssemblyMode::Unstacked;
  if (s == "stacked") return AssemblyMode::Stacked;
  throw InvalidArgument("unknown assembly mode '" + s + "' (expected unstacked or stacked)");
}

std::vector<Tensor*> NetworkParams::tensors() {
  std::vector<Tensor*> out{&W1, &b1, &W2, &b2};
  for (std::size_t l = 0; l < Wz.size(); ++l) {
    out.push_back(&Wz[l]);
    out.push_back(&bz[l]);
  }
  out.push_back(&W);
  out.push_back(&b);
  return out;
}

std::vector<const Tensor*> NetworkParams::tensors() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<NetworkParams*>(this)->tensors()) out.push_back(t);
  return out;
}

std::vector<std::string> NetworkParams::tensor_names() const {
  std::vector<std::string> out{"W1", "b1", "W2", "b2"};
  for (std::size_t l = 0; l < Wz.size(); ++l) {
    out.push_back("Wz" + std::to_string(l + 1));
    out.push_back("bz" + std::to_string(l + 1));
  }
  out.push_back("W");
  out.push_back("b");
  return out;
}

Eigen::Index NetworkParams::size() const {
  Eigen::Index n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

namespace {

void require_config(const NetworkConfig& cfg) {
  if (cfg.in_dim < 1 || cfg.out_dim < 1 || cfg.width < 1 || cfg.depth < 1) {
    throw InvalidArgument("network dimensions must be positive");
  }
}

}  // namespace

NetworkParams zero_params(const NetworkConfig& cfg) {
  require_config(cfg);
  NetworkParams p;
  p.W1 = Tensor::Zero(cfg.in_dim, cfg.width);
  p.b1 = Tensor::Zero(1, cfg.width);
  p.W2 = Tensor::Zero(cfg.in_dim, cfg.width);
  p.b2 = Tensor::Zero(1, cfg.width);
  for (int l = 0; l < cfg.depth; ++l) {
    p.Wz.push_back(Tensor::Zero(l == 0 ? cfg.in_dim : cfg.width, cfg.width));
    p.bz.push_back(Tensor::Zero(1, cfg.width));
  }
  p.W = Tensor::Zero(cfg.width, cfg.out_dim);
  p.b = Tensor::Zero(1, cfg.out_dim);
  return p;
}

NetworkParams init_glorot_normal(const NetworkConfig& cfg, std::uint64_t seed) {
  NetworkParams p = zero_params(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&](Tensor& w) {
    const double sd = std::sqrt(2.0 / static_cast<double>(w.rows() + w.cols()));
    std::normal_distribution<double> dist(0.0, sd);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  };
  fill(p.W1);
  fill(p.W2);
  for (Tensor& w : p.Wz) fill(w);
  fill(p.W);
  return p;
}

void check_params(const NetworkConfig& cfg, const NetworkParams& p) {
  const NetworkParams ref = zero_params(cfg);
  if (p.Wz.size() != ref.Wz.size() || p.bz.size() != ref.bz.size()) {
    throw InvalidArgument("network has " + std::to_string(p.Wz.size()) + " gate layers, expected " +
                          std::to_string(ref.Wz.size()));
  }
  const auto want = ref.tensors();
  const auto got = p.tensors();
  const auto names = ref.tensor_names();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i]->rows() != got[i]->rows() || want[i]->cols() != got[i]->cols()) {
      throw InvalidArgument("parameter " + names[i] + " has shape " + ad::shape_string(*got[i]) +
                            ", expected " + ad::shape_string(*want[i]));
    }
    if (!got[i]->allFinite()) throw InvalidArgument("parameter " + names[i] + " is not finite");
  }
}

BoundNetwork bind_segments(Var flat, const NetworkConfig& cfg, Eigen::Index offset) {
  const NetworkParams shape = zero_params(cfg);
  std::vector<Var> vars;
  for (const Tensor* t : shape.tensors()) {
    vars.push_back(ad::segment(flat, offset, t->rows(), t->cols()));
    offset += t->size();
  }
  BoundNetwork net;
  std::size_t k = 0;
  net.W1 = vars[k++];
  net.b1 = vars[k++];
  net.W2 = vars[k++];
  net.b2 = vars[k++];
  for (int l = 0; l < cfg.depth; ++l) {
    net.Wz.push_back(vars[k++]);
    net.bz.push_back(vars[k++]);
  }
  net.W = vars[k++];
  net.b = vars[k++];
  return net;
}

BoundNetwork bind_constants(ad::Tape& tape, const NetworkParams& p) {
  BoundNetwork net;
  net.W1 = tape.constant(p.W1);
  net.b1 = tape.constant(p.b1);
  net.W2 = tape.constant(p.W2);
  net.b2 = tape.constant(p.b2);
  for (std::size_t l = 0; l < p.Wz.size(); ++l) {
    net.Wz.push_back(tape.constant(p.Wz[l]));
    net.bz.push_back(tape.constant(p.bz[l]));
  }
  net.W = tape.constant(p.W);
  net.b = tape.constant(p.b);
  return net;
}

Var forward(const BoundNetwork& net, const NetworkConfig& cfg, Var X) {
  if (X.cols() != cfg.in_dim) {
    throw InvalidArgument("network input has shape " + ad::shape_string(X.value()) + ", expected " +
                          std::to_string(cfg.in_dim) + " columns");
  }
  const Var U = ad::sin(ad::affine(X, net.W1, net.b1));
  const Var V = ad::sin(ad::affine(X, net.W2, net.b2));
  Var H = X;
  for (std::size_t k = 0; k < net.Wz.size(); ++k) {
    const Var Z = ad::sin(ad::affine(H, net.Wz[k], net.bz[k]));
    H = ad::gate(Z, U, V);
  }
  Var out = ad::affine(H, net.W, net.b);
  if (cfg.output_feature == OutputFeature::Softplus) out = ad::softplus(out);
  return out;
}

Tensor forward(const NetworkParams& params, const NetworkConfig& cfg, const Tensor& X) {
  check_params(cfg, params);
  ad::Tape tape;
  const BoundNetwork net = bind_constants(tape, params);
  return forward(net, cfg, tape.constant(X)).value();
}

std::vector<const Network*> PinnAssembly::networks() const {
  std::vector<const Network*> out;
  for (const Network& n : y_networks) out.push_back(&n);
  for (const Network& n : z_networks) out.push_back(&n);
  return out;
}

std::vector<Network*> PinnAssembly::networks() {
  std::vector<Network*> out;
  for (Network& n : y_networks) out.push_back(&n);
  for (Network& n : z_networks) out.push_back(&n);
  return out;
}

Eigen::Index PinnAssembly::parameter_count() const {
  Eigen::Index n = 0;
  for (const Network* net : networks()) n += net->params.size();
  return n;
}

Eigen::VectorXd PinnAssembly::flatten() const {
  Eigen::VectorXd theta(parameter_count());
  Eigen::Index k = 0;
  for (const Network* net : networks()) {
    for (const Tensor* t : net->params.tensors()) {
      theta.segment(k, t->size()) = Eigen::Map<const Eigen::VectorXd>(t->data(), t->size());
      k += t->size();
    }
  }
  return theta;
}

void PinnAssembly::assign(const Eigen::VectorXd& theta) {
  if (theta.size() != parameter_count()) {
    throw InvalidArgument("parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                          std::to_string(parameter_count()));
  }
  Eigen::Index k = 0;
  for (Network* net : networks()) {
    for (Tensor* t : net->params.tensors()) {
      Eigen::Map<Eigen::VectorXd>(t->data(), t->size()) = theta.segment(k, t->size());
      k += t->size();
    }
  }
}

Tensor PinnAssembly::normalize(const Tensor& y) const {
  if (y.cols() != n) {
    throw InvalidArgument("input has shape " + ad::shape_string(y) + ", expected " + std::to_string(n) +
                          " columns");
  }
  Tensor x(y.rows(), y.cols());
  for (int s = 0; s < n; ++s) {
    const double lo = input_lo(s);
    const double hi = input_hi(s);
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const double scale = half > 0.0 ? 1.0 / half : 1.0;
    x.col(s) = (y.col(s).array() - mid) * scale;
  }
  return x;
}

PinnAssembly make_assembly(int n, int m, const ButcherTableau& tableau, double h,
                           const ArchitectureSpec& arch, const Eigen::VectorXd& input_lo,
                           const Eigen::VectorXd& input_hi, std::uint64_t seed) {
  if (n < 1 || m < 0) throw InvalidArgument("assembly needs n >= 1 and m >= 0");
  if (!(h > 0.0)) throw InvalidArgument("step h must be positive");
  if (input_lo.size() != n || input_hi.size() != n) {
    throw InvalidArgument("normalization bounds must have n entries");
  }
  PinnAssembly a;
  a.mode = arch.mode;
  a.n = n;
  a.m = m;
  a.tableau = tableau;
  a.h = h;
  a.input_lo = input_lo;
  a.input_hi = input_hi;
  const int slots = tableau.nu + 1;
  auto make = [&](int target_dim, int width, int depth, OutputFeature feature) {
    Network net;
    net.config.in_dim = n;
    net.config.out_dim = target_dim * slots;
    net.config.width = width;
    net.config.depth = depth;
    net.config.output_feature = feature;
    return net;
  };
  if (arch.mode == AssemblyMode::Unstacked) {
    a.y_networks.push_back(make(n, arch.y_width, arch.y_depth, OutputFeature::Identity));
    if (m > 0) a.z_networks.push_back(make(m, arch.z_width, arch.z_depth, OutputFeature::Softplus));
  } else {
    for (int s = 0; s < n; ++s) {
      a.y_networks.push_back(make(1, arch.y_width, arch.y_depth, OutputFeature::Identity));
    }
    for (int s = 0; s < m; ++s) {
      a.z_networks.push_back(make(1, arch.z_width, arch.z_depth, OutputFeature::Softplus));
    }
  }
  std::uint64_t k = 0;
  for (Network* net : a.networks()) net->params = init_glorot_normal(net->config, seed + k++);
  return a;
}

StageVars predict_stages(const PinnAssembly& a, Var theta, const Tensor& y_n) {
  ad::Tape& tape = *theta.tape();
  const Var X = tape.constant(a.normalize(y_n));
  Eigen::Index offset = 0;
  auto run_group = [&](const std::vector<Network>& group) -> Var {
    std::vector<Var> outs;
    for (const Network& net : group) {
      const BoundNetwork bound = bind_segments(theta, net.config, offset);
      offset += net.params.size();
      outs.push_back(forward(bound, net.config, X));
    }
    if (outs.empty()) return tape.constant(Tensor(y_n.rows(), 0));
    if (outs.size() == 1) return outs.front();
    return ad::concat_cols(outs);
  };
  StageVars out;
  out.Y = run_group(a.y_networks);
  out.Z = run_group(a.z_networks);
  return out;
}

StagePrediction predict_stages(const PinnAssembly& a, const Tensor& y_n) {
  ad::Tape tape;
  const Eigen::VectorXd theta = a.flatten();
  const Var flat = tape.constant(Tensor(Eigen::Map<const Tensor>(theta.data(), 1, theta.size())));
  const StageVars v = predict_stages(a, flat, y_n);
  StagePrediction p;
  p.Y = {static_cast<int>(y_n.rows()), a.slots(), a.n, v.Y.value()};
  p.Z = {static_cast<int>(y_n.rows()), a.slots(), a.m, v.Z.value()};
  return p;
}

namespace {

json tensor_json(const Tensor& t) {
  std::vector<double> data(t.data(), t.data() + t.size());
  return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", data}};
}

Tensor tensor_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint tensor data length does not match its shape");
  }
  return Eigen::Map<const Tensor>(data.data(), rows, cols);
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string checkpoint_to_string(const PinnAssembly& a, const CheckpointExtras& extras) {
  json j;
  j["format"] = "daepinn-checkpoint-1";
  j["mode"] = to_string(a.mode);
  j["n"] = a.n;
  j["m"] = a.m;
  j["nu"] = a.tableau.nu;
  j["scheme"] = to_string(a.tableau.scheme);
  j["order"] = a.tableau.order;
  j["tableau_file"] = extras.tableau_file;
  j["h"] = a.h;
  j["normalization"] = {{"lo", vector_json(a.input_lo)}, {"hi", vector_json(a.input_hi)}};
  j["seeds"] = {{"data", extras.data_seed}, {"init", extras.init_seed}};
  j["model"] = json::parse(extras.model_json.empty() ? "{}" : extras.model_json);
  j["config"] = extras.config_text;
  auto nets = [](const std::vector<Network>& group) {
    json arr = json::array();
    for (const Network& net : group) {
      json jn;
      jn["in_dim"] = net.config.in_dim;
      jn["out_dim"] = net.config.out_dim;
      jn["width"] = net.config.width;
      jn["depth"] = net.config.depth;
      jn["activation"] = "sin";
      jn["output_feature"] = to_string(net.config.output_feature);
      json params;
      const auto names = net.params.tensor_names();
      const auto tensors = net.params.tensors();
      for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = tensor_json(*tensors[i]);
      jn["params"] = params;
      arr.push_back(jn);
    }
    return arr;
  };
  j["y_networks"] = nets(a.y_networks);
  j["z_networks"] = nets(a.z_networks);
  return dump17(j, 1);
}

void save_checkpoint(const PinnAssembly& a, const CheckpointExtras& extras,
                     const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_string(a, extras));
}

PinnAssembly checkpoint_from_string(const std::string& text, CheckpointExtras* extras) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "daepinn-checkpoint-1") {
      throw ParseError("unsupported checkpoint format");
    }
    PinnAssembly a;
    a.mode = assembly_mode_from_string(j.at("mode").get<std::string>());
    a.n = j.at("n").get<int>();
    a.m = j.at("m").get<int>();
    a.h = j.at("h").get<double>();
    a.tableau = make_tableau(scheme_from_string(j.at("scheme").get<std::string>()), j.at("nu").get<int>());
    const auto lo = j.at("normalization").at("lo").get<std::vector<double>>();
    const auto hi = j.at("normalization").at("hi").get<std::vector<double>>();
    if (static_cast<int>(lo.size()) != a.n || static_cast<int>(hi.size()) != a.n) {
      throw ParseError("checkpoint normalization has wrong length");
    }
    a.input_lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), a.n);
    a.input_hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), a.n);
    auto nets = [&](const json& arr, std::vector<Network>& group) {
      for (const json& jn : arr) {
        Network net;
        net.config.in_dim = jn.at("in_dim").get<int>();
        net.config.out_dim = jn.at("out_dim").get<int>();
        net.config.width = jn.at("width").get<int>();
        net.config.depth = jn.at("depth").get<int>();
        net.config.output_feature = output_feature_from_string(jn.at("output_feature").get<std::string>());
        net.params = zero_params(net.config);
        const auto names = net.params.tensor_names();
        auto tensors = net.params.tensors();
        for (std::size_t i = 0; i < names.size(); ++i) *tensors[i] = tensor_from_json(jn.at("params").at(names[i]));
        check_params(net.config, net.params);
        group.push_back(std::move(net));
      }
    };
    nets(j.at("y_networks"), a.y_networks);
    nets(j.at("z_networks"), a.z_networks);
    if (extras) {
      extras->model_json = j.at("model").dump();
      extras->config_text = j.at("config").get<std::string>();
      extras->tableau_file = j.at("tableau_file").get<std::string>();
      extras->data_seed = j.at("seeds").at("data").get<std::uint64_t>();
      extras->init_seed = j.at("seeds").at("init").get<std::uint64_t>();
    }
    return a;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

PinnAssembly load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras) {
  return checkpoint_from_string(read_text_file(path), extras);
}

}  // namespace daepinn
