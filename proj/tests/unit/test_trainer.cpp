#include <cmath>

#include "doctest.h"
#include "daepinn/errors.hpp"
#include "daepinn/trainer.hpp"

using namespace daepinn;
using ad::Tape;
using ad::Var;

namespace {

Objective quadratic(double target) {
  return [target](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
    LossBreakdown b;
    b.L_f = (th(0) - target) * (th(0) - target);
    b.total = b.L_f;
    if (g) *g = Eigen::VectorXd::Constant(1, 2.0 * (th(0) - target));
    return b;
  };
}

TrainConfig toy_config() {
  TrainConfig c;
  c.K = 0;
  c.epochs_per_outer = 2000;
  c.ic_lo = Eigen::VectorXd::Constant(1, -1.0);
  c.ic_hi = Eigen::VectorXd::Constant(1, 1.0);
  return c;
}

PinnAssembly linear_assembly(int nu, std::uint64_t seed) {
  ArchitectureSpec arch;
  arch.y_width = 8;
  arch.y_depth = 2;
  arch.z_width = 8;
  arch.z_depth = 2;
  return make_assembly(1, 1, gauss_legendre_tableau(nu), 0.1, arch, Eigen::VectorXd::Constant(1, -1.0),
                       Eigen::VectorXd::Constant(1, 1.0), seed);
}

}  // namespace

TEST_CASE("initial condition sampling") {
  Eigen::VectorXd lo, hi;
  default_three_bus_ranges(lo, hi);
  const Tensor x = sample_initial_conditions(2000, lo, hi, 17);
  CHECK(x.rows() == 2000);
  CHECK(x.cols() == 4);
  for (Eigen::Index c = 0; c < 4; ++c) {
    CHECK(x.col(c).minCoeff() >= lo(c));
    CHECK(x.col(c).maxCoeff() <= hi(c));
  }
  CHECK((sample_initial_conditions(2000, lo, hi, 17) - x).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
  CHECK(sample_initial_conditions(10, z, z, 3).cwiseAbs().maxCoeff() == 0.0);

  const Tensor big = sample_initial_conditions(100000, lo, hi, 5);
  CHECK(std::abs(big.col(0).mean()) <= 0.03);
  CHECK_THROWS_AS(sample_initial_conditions(0, lo, hi, 1), InvalidArgument);
}

TEST_CASE("train and test sets are distinct") {
  TrainConfig c;
  c.train_size = 50;
  c.test_size = 30;
  const Dataset d = make_dataset(c, 4);
  CHECK(d.train.rows() == 50);
  CHECK(d.test.rows() == 30);
  CHECK((d.train.topRows(30) - d.test).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("adam first step has magnitude lr") {
  for (double g : {1e-3, 0.5, -3.0, 1e4}) {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 2.0);
    AdamState s;
    adam_step(p, Eigen::VectorXd::Constant(1, g), s, 1e-3);
    CHECK(std::abs(std::abs(p(0) - 2.0) - 1e-3) <= 1e-6);
    CHECK(std::abs(p(0) - 2.0) == doctest::Approx(1e-3 * std::abs(g) / (std::abs(g) + 1e-8)).epsilon(1e-12));
    CHECK((p(0) < 2.0) == (g > 0.0));
    CHECK(s.t == 1);
  }
}

TEST_CASE("adam zero gradient and moment recursion") {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(2, 1.0);
  AdamState s;
  adam_step(p, Eigen::VectorXd::Zero(2), s, 0.1);
  CHECK(p(0) == 1.0);
  CHECK(s.t == 1);

  Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 0.0);
  AdamState a;
  adam_step(q, Eigen::VectorXd::Constant(1, 2.0), a, 0.01);
  adam_step(q, Eigen::VectorXd::Constant(1, 2.0), a, 0.01);
  // m1 = 0.2, v1 = 0.004; m2 = 0.38, v2 = 0.007996
  CHECK(a.m(0) == doctest::Approx(0.38).epsilon(1e-15));
  CHECK(a.v(0) == doctest::Approx(0.007996).epsilon(1e-15));
  const double mh1 = 0.2 / 0.1, vh1 = 0.004 / 0.001;
  const double mh2 = 0.38 / (1 - 0.81), vh2 = 0.007996 / (1 - 0.998001);
  const double expected = -0.01 * mh1 / (std::sqrt(vh1) + 1e-8) - 0.01 * mh2 / (std::sqrt(vh2) + 1e-8);
  CHECK(q(0) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("adam rejects non-finite gradients") {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  AdamState s;
  try {
    adam_step(p, Eigen::VectorXd::Constant(1, NAN), s, 1e-3, 42);
    FAIL("expected divergence");
  } catch (const TrainingDivergence& e) {
    CHECK(e.epoch() == 42);
  }
  CHECK_THROWS_AS(adam_step(p, Eigen::VectorXd::Zero(2), s, 1e-3), InvalidArgument);
}

TEST_CASE("plateau decay") {
  PlateauConfig c;
  c.window = 10;
  std::vector<double> dec;
  for (int i = 0; i < 10; ++i) dec.push_back(std::pow(0.5, i));
  CHECK(reduce_lr_on_plateau(dec, c, 1e-3) == 1e-3);
  const std::vector<double> flat(10, 1.0);
  CHECK(reduce_lr_on_plateau(flat, c, 1e-3) == 5e-4);
  CHECK(reduce_lr_on_plateau(flat, c, 1e-5) == 1e-5);
  CHECK(reduce_lr_on_plateau(std::vector<double>(5, 1.0), c, 1e-3) == 1e-3);
}

TEST_CASE("inner loop on a quadratic") {
  TrainConfig c = toy_config();
  PenaltyTrainState st;
  const Objective obj = quadratic(1.0);
  // A straight-line Adam recursion in double precision converges from 0.5 after 1235 steps.
  const InnerResult r = train_inner(obj, nullptr, c, Eigen::VectorXd::Constant(1, 0.5), c.lr0, 0, st);
  CHECK(r.converged);
  CHECK(r.epochs == 1235);
  CHECK(r.best.total <= 1e-5);
  CHECK(static_cast<long>(st.history.size()) == r.epochs);

  PenaltyTrainState st2;
  const InnerResult done = train_inner(obj, nullptr, c, Eigen::VectorXd::Constant(1, 1.0), c.lr0, 0, st2);
  CHECK(done.converged);
  CHECK(done.epochs == 0);
  CHECK(st2.history.empty());

  c.epochs_per_outer = 10;
  PenaltyTrainState st3;
  const InnerResult capped = train_inner(obj, nullptr, c, Eigen::VectorXd::Zero(1), c.lr0, 0, st3);
  CHECK_FALSE(capped.converged);
  CHECK(capped.epochs == 10);
  CHECK(capped.best.total < 1.0);
}

TEST_CASE("penalty weights") {
  CHECK(penalty_weight(1.0, 2.0, 3) == 8.0);
  CHECK(penalty_weight(0.5, 3.0, 0) == 0.5);
  TrainConfig c = toy_config();
  c.K = 3;
  c.epochs_per_outer = 5;
  auto make = [](double wf, double wg) {
    return Objective([wf, wg](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
      LossBreakdown b;
      b.L_f = th(0) * th(0) + 1.0;
      b.w_f = wf;
      b.w_g = wg;
      b.total = wf * b.L_f;
      if (g) *g = Eigen::VectorXd::Constant(1, 2.0 * wf * th(0));
      return b;
    });
  };
  const PenaltyTrainState st = penalty_train(make, nullptr, Eigen::VectorXd::Constant(1, 1.0), c);
  REQUIRE(st.outer.size() == 4);
  CHECK(st.outer[3].w_f == 8.0);
  CHECK(st.outer[3].w_g == 8.0);
  CHECK(st.w_f == 8.0);
  for (int k = 0; k < 4; ++k) CHECK(st.outer[static_cast<std::size_t>(k)].w_f == penalty_weight(1.0, 2.0, k));
}

TEST_CASE("K = 0 reduces to the inner loop") {
  TrainConfig c = toy_config();
  const std::function<Objective(double, double)> make = [](double, double) { return quadratic(1.0); };
  const PenaltyTrainState outer = penalty_train(make, nullptr, Eigen::VectorXd::Zero(1), c);
  PenaltyTrainState st;
  const InnerResult inner = train_inner(quadratic(1.0), nullptr, c, Eigen::VectorXd::Zero(1), c.lr0, 0, st);
  CHECK(outer.best_params(0) == inner.params(0));
  CHECK(outer.history.size() == st.history.size());
}

TEST_CASE("full-batch gradient is the mean of per-example gradients") {
  const PinnAssembly a = linear_assembly(2, 4);
  const SemiExplicitDAE d = linear_test_dae();
  Tensor pts(3, 1);
  pts << -0.5, 0.1, 0.8;
  const Eigen::VectorXd th = a.flatten();
  Eigen::VectorXd full, acc = Eigen::VectorXd::Zero(th.size()), one;
  physics_objective(a, pts, d, 1.0, 1.0)(th, &full);
  for (int r = 0; r < 3; ++r) {
    const Tensor p = pts.row(r);
    physics_objective(a, p, d, 1.0, 1.0)(th, &one);
    acc += one;
  }
  acc /= 3.0;
  CHECK((full - acc).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, full.cwiseAbs().maxCoeff()));
}

TEST_CASE("penalty training on the linear test system") {
  const SemiExplicitDAE d = linear_test_dae();
  TrainConfig c = toy_config();
  c.K = 3;
  c.epochs_per_outer = 1500;
  c.train_size = 16;
  c.test_size = 8;
  c.eval_every = 500;
  const Dataset data = make_dataset(c, 1);
  const PinnAssembly init = linear_assembly(2, 9);
  const double initial = evaluate_loss(init, data.train, d, 1.0, 1.0).total;
  const TrainResult r = penalty_train(init, data, d, c);
  const TrainResult again = penalty_train(init, data, d, c);
  CHECK((r.assembly.flatten() - again.assembly.flatten()).cwiseAbs().maxCoeff() == 0.0);

  REQUIRE(r.state.outer.size() == 4);
  CHECK(r.state.outer[0].train.total <= initial);
  for (std::size_t k = 1; k < r.state.outer.size(); ++k) {
    CHECK(r.state.outer[k].train.L_g <= r.state.outer[k - 1].train.L_g * (1.0 + 1e-12));
  }
  CHECK(r.state.test_history.size() >= 4);
  const LossBreakdown final_loss = evaluate_loss(r.assembly, data.train, d, 8.0, 8.0);
  CHECK(final_loss.total == doctest::Approx(r.state.outer.back().train.total).epsilon(1e-12));
  const std::string log = training_log_csv(r.state);
  CHECK(log.rfind("epoch,outer_iter,w_f,w_g,L_f,L_g,total,learning_rate\n", 0) == 0);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c, 4));
  CHECK_THROWS_AS(validate(c, 2), InvalidArgument);
  c.beta = 1.0;
  CHECK_THROWS_AS(validate(c, 4), InvalidArgument);
  c = TrainConfig{};
  c.convergence_tol = 0.0;
  CHECK_THROWS_AS(validate(c, 4), InvalidArgument);
}
