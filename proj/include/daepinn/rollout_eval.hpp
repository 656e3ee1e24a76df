#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "daepinn/pinn_loss.hpp"
#include "daepinn/reference_solver.hpp"

namespace daepinn {

/// Anything that maps a batch of y_n to stage predictions over one step.
class StageModel {
 public:
  virtual ~StageModel() = default;
  virtual int n() const = 0;
  virtual int m() const = 0;
  virtual double h() const = 0;
  virtual const ButcherTableau& tableau() const = 0;
  virtual StagePrediction predict(const Tensor& y_n) const = 0;
};

class PinnStageModel : public StageModel {
 public:
  explicit PinnStageModel(PinnAssembly a) : a_(std::move(a)) {}
  int n() const override { return a_.n; }
  int m() const override { return a_.m; }
  double h() const override { return a_.h; }
  const ButcherTableau& tableau() const override { return a_.tableau; }
  StagePrediction predict(const Tensor& y_n) const override { return predict_stages(a_, y_n); }
  const PinnAssembly& assembly() const { return a_; }

 private:
  PinnAssembly a_;
};

/// The reference solver's IRK step dressed up as a stage model: z_n is made
/// consistent from z_guess, then one Newton-solved step is taken.
class OracleStageModel : public StageModel {
 public:
  OracleStageModel(SemiExplicitDAE dae, SolverConfig cfg, double h, Eigen::VectorXd z_guess)
      : dae_(std::move(dae)), cfg_(std::move(cfg)), h_(h), z_guess_(std::move(z_guess)) {}
  int n() const override { return dae_.n; }
  int m() const override { return dae_.m; }
  double h() const override { return h_; }
  const ButcherTableau& tableau() const override { return cfg_.tableau; }
  StagePrediction predict(const Tensor& y_n) const override;

 private:
  SemiExplicitDAE dae_;
  SolverConfig cfg_;
  double h_;
  Eigen::VectorXd z_guess_;
};

struct RolloutResult {
  Trajectory trajectory;          // N * (nu+1) samples on the stage grid
  int N = 0;
  std::vector<double> drift;      // ||g||_inf over the nu+1 slots of each step
  std::optional<Eigen::VectorXd> errors;
};

/// Recurrent evaluation: y_{n+1} from each forward pass becomes the next
/// input. Algebraic values are never re-projected. dae is used only for the
/// drift measurement.
RolloutResult simulate(const StageModel& model, const SemiExplicitDAE& dae, const Eigen::VectorXd& y0, int N);

/// Per state (y components then z components): ||pred - truth|| / ||truth||
/// over the prediction's time grid, with truth from dense_eval.
Eigen::VectorXd l2_relative_error(const Trajectory& pred, const Trajectory& truth,
                                  const std::vector<std::string>& names = {});

/// Same, restricted to the first `rows` prediction samples.
Eigen::VectorXd l2_relative_error(const Trajectory& pred, const Trajectory& truth, std::size_t rows,
                                  const std::vector<std::string>& names);

struct RolloutFailure {
  int index = 0;
  std::string message;
};

struct EnsembleReport {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;            // population
  Eigen::MatrixXd errors;         // successful ICs x states
  std::vector<int> ok_index;
  std::vector<RolloutFailure> failures;
  double max_drift = 0.0;
};

/// One rollout plus one oracle solve per initial condition (rows of ics).
EnsembleReport evaluate_ensemble(const StageModel& model, const SemiExplicitDAE& dae, const Tensor& ics, int N,
                                 const SolverConfig& oracle, const Eigen::VectorXd& z_guess);

struct SchemeCurve {
  std::string label;
  Eigen::MatrixXd errors;  // row N'-1 holds the errors over the first N' steps
};

/// Error curves for N' = 1..N. All models must share h.
std::vector<SchemeCurve> compare_schemes(const std::vector<std::pair<std::string, const StageModel*>>& models,
                                         const SemiExplicitDAE& dae, const Eigen::VectorXd& y0, int N,
                                         const SolverConfig& oracle, const Eigen::VectorXd& z_guess);

std::vector<std::string> state_names(const SemiExplicitDAE& dae);

/// state,l2rel
std::string errors_csv(const Eigen::VectorXd& errors, const std::vector<std::string>& names);
/// step,ginf
std::string drift_csv(const std::vector<double>& drift);
/// statistic,<states> with rows mean and std, then ok/failed counts.
std::string ensemble_csv(const EnsembleReport& r, const std::vector<std::string>& names);
/// scheme,steps,<states>
std::string curves_csv(const std::vector<SchemeCurve>& curves, const std::vector<std::string>& names);

struct PlotSeries {
  std::string label;
  std::vector<double> t;
  std::vector<double> v;
  bool dashed = false;
};

/// A self-contained SVG line chart.
std::string svg_plot(const std::string& title, const std::vector<PlotSeries>& series);

}  // namespace daepinn
