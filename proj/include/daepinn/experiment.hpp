#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "daepinn/config.hpp"
#include "daepinn/rollout_eval.hpp"

namespace daepinn {

/// Sampling bounds from the config, falling back to the three-bus ranges.
void resolve_ic_ranges(const ExperimentConfig& c, int n, Eigen::VectorXd& lo, Eigen::VectorXd& hi);

TrainConfig resolve_train_config(const ExperimentConfig& c, int n);

PinnAssembly initial_assembly(const ExperimentConfig& c, const SemiExplicitDAE& dae);

struct TrainedRun {
  ExperimentConfig config;
  PinnAssembly assembly;
  PenaltyTrainState state;
  Dataset data;
};

TrainedRun run_training(const ExperimentConfig& c, const ProgressFn& progress = {});

CheckpointExtras checkpoint_extras(const ExperimentConfig& c);

struct LoadedRun {
  ExperimentConfig config;
  PinnAssembly assembly;
  SemiExplicitDAE dae;
};

LoadedRun load_run(const std::filesystem::path& checkpoint);

Eigen::VectorXd parse_state(const std::string& text, int n);

std::string points_csv(const Tensor& points, const std::vector<std::string>& names);

// Subcommands. Each writes only inside its output location and leaves a
// manifest there.
OrderReport cmd_tableau(Scheme scheme, int stages, const std::filesystem::path& out_file);
void cmd_datagen(const ExperimentConfig& c, const std::filesystem::path& out_dir);
TrainedRun cmd_train(const ExperimentConfig& c, const std::filesystem::path& checkpoint,
                     const ProgressFn& progress = {});
Trajectory cmd_oracle(const ExperimentConfig& c, const Eigen::VectorXd& y0, double t_end,
                      const std::filesystem::path& out_dir);
RolloutResult cmd_simulate(const std::filesystem::path& checkpoint, const Eigen::VectorXd& y0, int steps, bool truth,
                           const std::filesystem::path& out_dir, bool svg = true);
EnsembleReport cmd_evaluate(const std::filesystem::path& checkpoint, int ensemble, int steps,
                            const std::filesystem::path& out_dir);
std::vector<SchemeCurve> cmd_compare(const std::vector<std::filesystem::path>& checkpoints,
                                     const Eigen::VectorXd& y0, int steps, const std::filesystem::path& out_dir);

struct GridPoint {
  ArchitectureSpec arch;
  int train_size = 0;
};

/// Cartesian product of the listed values; unlisted axes keep the base value.
std::vector<GridPoint> expand_grid(const ExperimentConfig& c);

struct GridRow {
  int index = 0;
  GridPoint point;
  bool ok = false;
  bool converged = false;
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::string error;
};

std::vector<GridRow> cmd_grid(const ExperimentConfig& c, const std::filesystem::path& out_dir);

/// DAEPINN_OUT_ROOT, else the config's output dir, else ./runs.
std::filesystem::path default_output_root(const ExperimentConfig& c);

}  // namespace daepinn
