#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "daepinn/pinn_loss.hpp"

namespace daepinn {

struct PlateauConfig {
  long window = 2000;
  double factor = 0.5;
  double min_lr = 1e-5;
  double threshold = 0.01;  // required relative improvement over a window
};

struct TrainConfig {
  long epochs_per_outer = 50000;
  int K = 5;
  double w_f0 = 1.0;
  double w_g0 = 1.0;
  double beta = 2.0;
  double convergence_tol = 1e-5;
  double lr0 = 1e-3;
  PlateauConfig plateau;
  std::uint64_t data_seed = 1234;
  std::uint64_t init_seed = 5678;
  int train_size = 2000;
  int test_size = 1500;
  long eval_every = 1000;
  Eigen::VectorXd ic_lo;  // empty: three-bus defaults
  Eigen::VectorXd ic_hi;
};

/// omega1, omega2 in (-pi, pi); delta2, delta3 in (-0.1, 0.1).
void default_three_bus_ranges(Eigen::VectorXd& lo, Eigen::VectorXd& hi);

/// Throws InvalidArgument for any out-of-range field.
void validate(const TrainConfig& cfg, int n);

/// count x n, column c uniform on [lo_c, hi_c], deterministic for a seed.
Tensor sample_initial_conditions(int count, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                 std::uint64_t seed);

struct Dataset {
  Tensor train;
  Tensor test;
};

/// Training and test sets from distinct seeds derived from data_seed; throws
/// if any test point duplicates a training point.
Dataset make_dataset(const TrainConfig& cfg, int n);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update in place. epoch only labels errors.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, double lr, long epoch = 0);

/// Compares the mean of the second half of the last `window` totals with the
/// first half; without a relative improvement of `threshold` the rate decays.
double reduce_lr_on_plateau(const std::vector<double>& totals, const PlateauConfig& cfg, double lr);

struct EpochRecord {
  long epoch = 0;  // global across outer iterations
  int outer = 0;
  double w_f = 0.0, w_g = 0.0;
  double L_f = 0.0, L_g = 0.0, total = 0.0;
  double lr = 0.0;
};

struct TestRecord {
  long epoch = 0;
  int outer = 0;
  LossBreakdown loss;
};

struct OuterSummary {
  int k = 0;
  double w_f = 0.0, w_g = 0.0;
  long epochs = 0;
  bool converged = false;
  LossBreakdown train;             // at the returned parameters
  std::optional<LossBreakdown> test;
  double lr_end = 0.0;
};

struct PenaltyTrainState {
  int k = 0;
  double w_f = 1.0;
  double w_g = 1.0;
  Eigen::VectorXd best_params;
  std::vector<EpochRecord> history;
  std::vector<TestRecord> test_history;
  std::vector<OuterSummary> outer;
};

/// w0 * beta^k with the power formed by k multiplications.
double penalty_weight(double w0, double beta, int k);

/// Differentiable objective over a flat parameter vector. The default
/// objective is the composite physics loss of the assembly.
using Objective = std::function<LossBreakdown(const Eigen::VectorXd& theta, Eigen::VectorXd* grad)>;

Objective physics_objective(const PinnAssembly& a, const Tensor& points, const SemiExplicitDAE& dae, double w_f,
                            double w_g);

struct InnerResult {
  Eigen::VectorXd params;
  bool converged = false;
  long epochs = 0;
  LossBreakdown best;
  double lr_end = 0.0;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

/// Full-batch Adam from warm_start until total <= convergence_tol or the
/// epoch cap. Returns the best parameters seen; history gets the loss before
/// every step.
InnerResult train_inner(const Objective& objective, const Objective* test_objective, const TrainConfig& cfg,
                        const Eigen::VectorXd& warm_start, double lr, int outer, PenaltyTrainState& state,
                        const ProgressFn& progress = {});

struct TrainResult {
  PinnAssembly assembly;  // with the final parameters
  PenaltyTrainState state;
};

/// Penalty schedule: k = 0 from the assembly's current parameters, then K
/// more solves with both weights multiplied by beta, each warm-started.
TrainResult penalty_train(const PinnAssembly& init, const Dataset& data, const SemiExplicitDAE& dae,
                          const TrainConfig& cfg, const ProgressFn& progress = {});

/// Generic form used by tests: objective(w_f, w_g) builds the weighted loss.
PenaltyTrainState penalty_train(const std::function<Objective(double w_f, double w_g)>& make_objective,
                                const std::function<Objective(double w_f, double w_g)>* make_test,
                                const Eigen::VectorXd& theta0, const TrainConfig& cfg,
                                const ProgressFn& progress = {});

/// epoch,outer_iter,w_f,w_g,L_f,L_g,total,learning_rate
std::string training_log_csv(const PenaltyTrainState& state);

}  // namespace daepinn
