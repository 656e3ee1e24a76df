#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daepinn/autodiff.hpp"
#include "daepinn/tableau.hpp"

namespace daepinn {

using ad::Tensor;

enum class Activation { Sin };
enum class OutputFeature { Identity, Softplus };

std::string to_string(OutputFeature f);
OutputFeature output_feature_from_string(const std::string& s);

struct NetworkConfig {
  int in_dim = 1;
  int out_dim = 1;
  int width = 1;
  int depth = 1;
  Activation activation = Activation::Sin;
  OutputFeature output_feature = OutputFeature::Identity;
};

/// Trainable set of the gated architecture: two encoders (U, V), one gate
/// layer per hidden layer, and a linear head. Wz[0] is in_dim x width, the
/// remaining gate matrices are width x width.
struct NetworkParams {
  Tensor W1, b1;
  Tensor W2, b2;
  std::vector<Tensor> Wz, bz;
  Tensor W, b;

  /// Fixed traversal order used for flattening and checkpoints.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
  Eigen::Index size() const;
};

NetworkParams zero_params(const NetworkConfig& cfg);

/// Glorot normal: std sqrt(2 / (fan_in + fan_out)); biases zero.
NetworkParams init_glorot_normal(const NetworkConfig& cfg, std::uint64_t seed);

/// Throws InvalidArgument when shapes do not follow cfg.
void check_params(const NetworkConfig& cfg, const NetworkParams& p);

/// Parameters of one network as tape nodes, in tensors() order.
struct BoundNetwork {
  ad::Var W1, b1, W2, b2;
  std::vector<ad::Var> Wz, bz;
  ad::Var W, b;
};

/// Views into a flat 1 x P parameter node starting at `offset`.
BoundNetwork bind_segments(ad::Var flat, const NetworkConfig& cfg, Eigen::Index offset);
BoundNetwork bind_constants(ad::Tape& tape, const NetworkParams& p);

/// U = sin(X W1 + b1), V = sin(X W2 + b2), H = X,
/// Z_k = sin(H W^{z,k} + b^{z,k}), H = (1 - Z_k) .* U + Z_k .* V, k = 1..d,
/// out = feature(H W + b).
ad::Var forward(const BoundNetwork& net, const NetworkConfig& cfg, ad::Var X);
Tensor forward(const NetworkParams& params, const NetworkConfig& cfg, const Tensor& X);

enum class AssemblyMode { Unstacked, Stacked };
std::string to_string(AssemblyMode m);
AssemblyMode assembly_mode_from_string(const std::string& s);

struct Network {
  NetworkConfig config;
  NetworkParams params;
};

/// State-major stage layout: column s * slots + j holds state s at slot j.
/// Slots 0..nu-1 are the stages, slot nu is the step endpoint.
struct StageTensor {
  int batch = 0;
  int slots = 0;
  int dim = 0;
  Tensor data;

  double at(int b, int slot, int s) const { return data(b, s * slots + slot); }
  double& at(int b, int slot, int s) { return data(b, s * slots + slot); }
};

struct StagePrediction {
  StageTensor Y;
  StageTensor Z;
};

/// One or several networks mapping y_n to all stage values of y and z. The
/// input is rescaled affinely from [input_lo, input_hi] to [-1, 1] first.
struct PinnAssembly {
  AssemblyMode mode = AssemblyMode::Unstacked;
  int n = 0;
  int m = 0;
  ButcherTableau tableau;
  double h = 0.1;
  std::vector<Network> y_networks;
  std::vector<Network> z_networks;
  Eigen::VectorXd input_lo;
  Eigen::VectorXd input_hi;

  int slots() const { return tableau.nu + 1; }
  /// Every network in traversal order: y networks, then z networks.
  std::vector<const Network*> networks() const;
  std::vector<Network*> networks();
  Eigen::Index parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& theta);
  Tensor normalize(const Tensor& y) const;
};

struct ArchitectureSpec {
  AssemblyMode mode = AssemblyMode::Unstacked;
  int y_width = 100;
  int y_depth = 4;
  int z_width = 40;
  int z_depth = 4;
};

/// Builds and initializes the networks. Network k (traversal order) is seeded
/// with seed + k.
PinnAssembly make_assembly(int n, int m, const ButcherTableau& tableau, double h,
                           const ArchitectureSpec& arch, const Eigen::VectorXd& input_lo,
                           const Eigen::VectorXd& input_hi, std::uint64_t seed);

struct StageVars {
  ad::Var Y;  // batch x n * slots
  ad::Var Z;  // batch x m * slots
};

/// Records the assembly forward pass with parameters taken from a flat 1 x P node.
StageVars predict_stages(const PinnAssembly& a, ad::Var theta, const Tensor& y_n);
StagePrediction predict_stages(const PinnAssembly& a, const Tensor& y_n);

/// Checkpoint: JSON document with every double written at 17 significant digits.
struct CheckpointExtras {
  std::string model_json = "{}";   // serialized model description
  std::string config_text;        // resolved experiment config
  std::string tableau_file;       // optional reference, informational
  std::uint64_t data_seed = 0;
  std::uint64_t init_seed = 0;
};

std::string checkpoint_to_string(const PinnAssembly& a, const CheckpointExtras& extras);
void save_checkpoint(const PinnAssembly& a, const CheckpointExtras& extras,
                     const std::filesystem::path& path);
PinnAssembly checkpoint_from_string(const std::string& text, CheckpointExtras* extras = nullptr);
PinnAssembly load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras = nullptr);

}  // namespace daepinn
