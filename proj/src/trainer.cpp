#include "daepinn/trainer.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "daepinn/errors.hpp"
#include "daepinn/text_io.hpp"

namespace daepinn {

using ad::Tape;
using ad::Var;

void default_three_bus_ranges(Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  lo.resize(4);
  hi.resize(4);
  lo << -std::numbers::pi, -std::numbers::pi, -0.1, -0.1;
  hi << std::numbers::pi, std::numbers::pi, 0.1, 0.1;
}

void validate(const TrainConfig& cfg, int n) {
  if (cfg.epochs_per_outer < 1) throw InvalidArgument("epochs_per_outer must be >= 1");
  if (cfg.K < 0) throw InvalidArgument("K must be >= 0");
  if (!(cfg.w_f0 > 0.0) || !(cfg.w_g0 > 0.0)) throw InvalidArgument("initial penalty weights must be positive");
  if (!(cfg.beta > 1.0)) throw InvalidArgument("beta must be > 1");
  if (!(cfg.convergence_tol > 0.0)) throw InvalidArgument("convergence_tol must be positive");
  if (!(cfg.lr0 > 0.0)) throw InvalidArgument("lr0 must be positive");
  if (cfg.plateau.window < 2 || !(cfg.plateau.factor > 0.0 && cfg.plateau.factor <= 1.0) ||
      !(cfg.plateau.min_lr > 0.0) || !(cfg.plateau.threshold >= 0.0)) {
    throw InvalidArgument("plateau settings out of range");
  }
  if (cfg.train_size < 1 || cfg.test_size < 0) throw InvalidArgument("train_size must be >= 1, test_size >= 0");
  if (cfg.eval_every < 0) throw InvalidArgument("eval_every must be >= 0");
  if (cfg.ic_lo.size() != 0 || cfg.ic_hi.size() != 0) {
    if (cfg.ic_lo.size() != n || cfg.ic_hi.size() != n) {
      throw InvalidArgument("ic ranges must have " + std::to_string(n) + " entries");
    }
    if ((cfg.ic_hi.array() < cfg.ic_lo.array()).any()) throw InvalidArgument("ic_hi below ic_lo");
  } else if (n != 4) {
    throw InvalidArgument("ic ranges are required for models other than three_bus");
  }
}

Tensor sample_initial_conditions(int count, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                 std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("sample count must be >= 1");
  if (lo.size() != hi.size()) throw InvalidArgument("ic bounds differ in length");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor out(count, lo.size());
  for (int r = 0; r < count; ++r) {
    for (Eigen::Index c = 0; c < lo.size(); ++c) out(r, c) = lo(c) + (hi(c) - lo(c)) * u(rng);
  }
  return out;
}

Dataset make_dataset(const TrainConfig& cfg, int n) {
  validate(cfg, n);
  Eigen::VectorXd lo = cfg.ic_lo, hi = cfg.ic_hi;
  if (lo.size() == 0) default_three_bus_ranges(lo, hi);
  Dataset d;
  d.train = sample_initial_conditions(cfg.train_size, lo, hi, cfg.data_seed);
  if (cfg.test_size > 0) {
    d.test = sample_initial_conditions(cfg.test_size, lo, hi, cfg.data_seed ^ 0x9E3779B97F4A7C15ULL);
    std::set<std::vector<double>> seen;
    for (Eigen::Index r = 0; r < d.train.rows(); ++r) {
      seen.insert(std::vector<double>(d.train.row(r).data(), d.train.row(r).data() + n));
    }
    for (Eigen::Index r = 0; r < d.test.rows(); ++r) {
      if (seen.count(std::vector<double>(d.test.row(r).data(), d.test.row(r).data() + n))) {
        throw InvalidArgument("test set shares a point with the training set");
      }
    }
  } else {
    d.test = Tensor(0, n);
  }
  return d;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& s, double lr, long epoch) {
  if (grads.size() != params.size()) throw InvalidArgument("adam_step: gradient and parameter sizes differ");
  if (!grads.allFinite()) throw TrainingDivergence("non-finite gradient", epoch);
  if (s.m.size() == 0) {
    s.m = Eigen::VectorXd::Zero(params.size());
    s.v = Eigen::VectorXd::Zero(params.size());
  }
  s.t += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  params.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

double reduce_lr_on_plateau(const std::vector<double>& totals, const PlateauConfig& cfg, double lr) {
  const auto w = static_cast<std::size_t>(cfg.window);
  if (totals.size() < w || w < 2) return lr;
  const std::size_t start = totals.size() - w;
  const std::size_t half = w / 2;
  double first = 0.0, second = 0.0;
  for (std::size_t i = 0; i < half; ++i) first += totals[start + i];
  for (std::size_t i = half; i < w; ++i) second += totals[start + i];
  first /= static_cast<double>(half);
  second /= static_cast<double>(w - half);
  if (second > (1.0 - cfg.threshold) * first) return std::max(lr * cfg.factor, cfg.min_lr);
  return lr;
}

double penalty_weight(double w0, double beta, int k) {
  double p = 1.0;
  for (int i = 0; i < k; ++i) p *= beta;
  return w0 * p;
}

Objective physics_objective(const PinnAssembly& a, const Tensor& points, const SemiExplicitDAE& dae, double w_f,
                            double w_g) {
  return [&a, &points, &dae, w_f, w_g](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    Tape tape;
    tape.reserve(256);
    const Var flat = grad ? tape.variable(Tensor(Eigen::Map<const Tensor>(theta.data(), 1, theta.size())))
                          : tape.constant(Tensor(Eigen::Map<const Tensor>(theta.data(), 1, theta.size())));
    const CompositeLoss l = composite_loss(a, flat, points, dae, w_f, w_g);
    LossBreakdown b;
    b.L_f = l.L_f.scalar();
    b.L_g = l.L_g.scalar();
    b.total = l.total.scalar();
    b.w_f = w_f;
    b.w_g = w_g;
    if (grad) {
      tape.backward(l.total);
      const Tensor g = tape.grad(flat);
      *grad = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    }
    return b;
  };
}

InnerResult train_inner(const Objective& objective, const Objective* test_objective, const TrainConfig& cfg,
                        const Eigen::VectorXd& warm_start, double lr, int outer, PenaltyTrainState& state,
                        const ProgressFn& progress) {
  InnerResult res;
  Eigen::VectorXd theta = warm_start;
  AdamState adam;
  std::vector<double> totals;
  Eigen::VectorXd grad;
  res.params = theta;
  res.best.total = INFINITY;
  const long base_epoch = state.history.empty() ? 0 : state.history.back().epoch + 1;

  for (long e = 0;; ++e) {
    const bool step = e < cfg.epochs_per_outer;
    const LossBreakdown cur = objective(theta, step ? &grad : nullptr);
    if (!std::isfinite(cur.total)) throw TrainingDivergence("non-finite training loss", base_epoch + e);
    if (cur.total < res.best.total) {
      res.best = cur;
      res.params = theta;
    }
    if (cur.total <= cfg.convergence_tol) {
      res.converged = true;
      break;
    }
    if (!step) break;
    EpochRecord rec{base_epoch + e, outer, cur.w_f, cur.w_g, cur.L_f, cur.L_g, cur.total, lr};
    state.history.push_back(rec);
    if (progress) progress(rec);
    totals.push_back(cur.total);
    adam_step(theta, grad, adam, lr, base_epoch + e);
    res.epochs = e + 1;
    if (res.epochs % cfg.plateau.window == 0) lr = reduce_lr_on_plateau(totals, cfg.plateau, lr);
    if (test_objective && cfg.eval_every > 0 && res.epochs % cfg.eval_every == 0) {
      state.test_history.push_back({base_epoch + e, outer, (*test_objective)(theta, nullptr)});
    }
  }
  res.lr_end = lr;
  return res;
}

PenaltyTrainState penalty_train(const std::function<Objective(double, double)>& make_objective,
                                const std::function<Objective(double, double)>* make_test,
                                const Eigen::VectorXd& theta0, const TrainConfig& cfg, const ProgressFn& progress) {
  PenaltyTrainState state;
  Eigen::VectorXd theta = theta0;
  for (int k = 0; k <= cfg.K; ++k) {
    state.k = k;
    state.w_f = penalty_weight(cfg.w_f0, cfg.beta, k);
    state.w_g = penalty_weight(cfg.w_g0, cfg.beta, k);
    const Objective obj = make_objective(state.w_f, state.w_g);
    std::optional<Objective> test;
    if (make_test) test = (*make_test)(state.w_f, state.w_g);
    // Every inner solve is a fresh Adam run from lr0, warm-started only in
    // the parameters.
    const InnerResult r = train_inner(obj, test ? &*test : nullptr, cfg, theta, cfg.lr0, k, state, progress);
    theta = r.params;
    OuterSummary sum;
    sum.k = k;
    sum.w_f = state.w_f;
    sum.w_g = state.w_g;
    sum.epochs = r.epochs;
    sum.converged = r.converged;
    sum.train = r.best;
    if (test) sum.test = (*test)(theta, nullptr);
    sum.lr_end = r.lr_end;
    state.outer.push_back(sum);
  }
  state.best_params = theta;
  return state;
}

TrainResult penalty_train(const PinnAssembly& init, const Dataset& data, const SemiExplicitDAE& dae,
                          const TrainConfig& cfg, const ProgressFn& progress) {
  validate(cfg, init.n);
  if (data.train.rows() < 1) throw InvalidArgument("training set is empty");
  TrainResult out{init, {}};
  const PinnAssembly& a = out.assembly;
  const std::function<Objective(double, double)> make = [&](double wf, double wg) {
    return physics_objective(a, data.train, dae, wf, wg);
  };
  const std::function<Objective(double, double)> make_test = [&](double wf, double wg) {
    return physics_objective(a, data.test, dae, wf, wg);
  };
  out.state = penalty_train(make, data.test.rows() > 0 ? &make_test : nullptr, init.flatten(), cfg, progress);
  out.assembly.assign(out.state.best_params);
  return out;
}

std::string training_log_csv(const PenaltyTrainState& state) {
  std::ostringstream out;
  out << "epoch,outer_iter,w_f,w_g,L_f,L_g,total,learning_rate\n";
  for (const EpochRecord& r : state.history) {
    out << r.epoch << "," << r.outer << "," << fmt17(r.w_f) << "," << fmt17(r.w_g) << "," << fmt17(r.L_f) << ","
        << fmt17(r.L_g) << "," << fmt17(r.total) << "," << fmt17(r.lr) << "\n";
  }
  return out.str();
}

}  // namespace daepinn
