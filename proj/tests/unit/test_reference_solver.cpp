#include <cmath>

#include "doctest.h"
#include "daepinn/errors.hpp"
#include "daepinn/reference_solver.hpp"

using namespace daepinn;
using ad::Tape;
using ad::Var;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

SolverConfig gauss(int nu, double h) {
  SolverConfig c;
  c.tableau = gauss_legendre_tableau(nu);
  c.h_ref = h;
  return c;
}

}  // namespace

TEST_CASE("gauss 2 on the linear DAE is the (2,2) Pade approximant") {
  const double h = 0.1;
  const double pade = (1 - h / 2 + h * h / 12) / (1 + h / 2 + h * h / 12);
  const auto s = irk_step(linear_test_dae(), vec({1.0}), vec({1.0}), gauss(2, h));
  CHECK(std::abs(s.y1(0) - pade) <= 1e-14);
  // One step of an order-4 method: local error about h^5 / 720 = 1.4e-8.
  CHECK(std::abs(s.y1(0) - std::exp(-h)) <= 1.4e-8);
  CHECK(std::abs(s.z1(0) - s.y1(0)) <= 1e-15);
}

TEST_CASE("stationary system") {
  SemiExplicitDAE dae = linear_test_dae();
  dae.f = [](Tape&, std::span<const Var> y, std::span<const Var>) { return std::vector<Var>{ad::scale(y[0], 0.0)}; };
  dae.g = [](Tape&, std::span<const Var>, std::span<const Var> z) { return std::vector<Var>{z[0] - 1.0}; };
  for (double h : {1e-3, 0.5, 10.0}) {
    const auto s = irk_step(dae, vec({0.37}), vec({1.0}), gauss(3, h));
    CHECK(s.y1(0) == 0.37);
    CHECK(s.z1(0) == 1.0);
  }
}

TEST_CASE("three-bus step stays on the manifold") {
  const auto dae = three_bus(ThreeBusParams::stable_benchmark());
  const Eigen::VectorXd y0 = vec({0.1, -0.2, 0.05, -0.03});
  const Eigen::VectorXd z0 = consistent_z(dae, y0, vec({1.0}));
  for (double h : {1e-3, 0.1}) {
    const auto s = irk_step(dae, y0, z0, gauss(3, h));
    CHECK(std::abs(eval_g(dae, s.y1, s.z1)(0)) <= 1e-10);
    CHECK(s.residual <= 1e-12 * 100);
  }
}

TEST_CASE("linear DAE to t = 1") {
  const auto traj = solve(linear_test_dae(), vec({1.0}), vec({0.0}), 1.0, gauss(3, 1e-3));
  REQUIRE(traj.size() == 1001);
  double worst = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    worst = std::max(worst, std::abs(traj.Y(static_cast<Eigen::Index>(k), 0) - std::exp(-traj.times[k])));
  }
  CHECK(worst <= 1e-10);
  CHECK(traj.times.back() == 1.0);
  CHECK(traj.meta.at("scheme") == "gauss");
}

TEST_CASE("one step when t_end equals the step") {
  const auto traj = solve(linear_test_dae(), vec({1.0}), vec({1.0}), 0.01, gauss(2, 0.01));
  CHECK(traj.size() == 2);
}

TEST_CASE("last step lands on t_end") {
  const auto traj = solve(linear_test_dae(), vec({1.0}), vec({1.0}), 0.025, gauss(2, 0.01));
  CHECK(traj.size() == 4);
  CHECK(traj.times.back() == 0.025);
  CHECK(std::abs(traj.Y(3, 0) - std::exp(-0.025)) <= 1e-10);
}

TEST_CASE("step halving in double precision follows the order") {
  // Large steps keep the error well above roundoff.
  for (int nu : {1, 2}) {
    const double p = 2 * nu;
    const auto e = [&](double h) {
      const auto traj = solve(linear_test_dae(), vec({1.0}), vec({1.0}), 1.0, gauss(nu, h));
      return std::abs(traj.Y(traj.Y.rows() - 1, 0) - std::exp(-1.0));
    };
    const double ratio = e(0.1) / e(0.05);
    CHECK(ratio >= std::pow(2.0, p) / 1.2);
    CHECK(ratio <= std::pow(2.0, p) * 1.2);
  }
}

TEST_CASE("extended precision convergence orders") {
  using R = ExtendedReal;
  const LinearDae<R> model;
  const R exact = boost::multiprecision::exp(R(-1));
  for (int nu : {1, 2, 3}) {
    CAPTURE(nu);
    const auto tab = gauss_legendre_tableau_extended(nu);
    std::vector<double> errs;
    for (double h : {1e-2, 5e-3, 2.5e-3}) {
      const auto y = solve_endpoint_generic(model, tab, {R(1)}, {R(1)}, R(1), R(h), R(1e-30), 50);
      errs.push_back(static_cast<double>(boost::multiprecision::abs(y[0] - exact)));
    }
    for (int k = 0; k + 1 < 3; ++k) {
      const double ratio = errs[k] / errs[k + 1];
      CHECK(ratio >= std::pow(2.0, 2 * nu) / 1.2);
      CHECK(ratio <= std::pow(2.0, 2 * nu) * 1.2);
    }
  }
}

TEST_CASE("dense output") {
  const auto traj = solve(linear_test_dae(), vec({1.0}), vec({1.0}), 1.0, gauss(3, 1e-3));
  const auto at_node = dense_eval(traj, traj.times[137]);
  CHECK(at_node.first(0) == traj.Y(137, 0));
  CHECK(at_node.second(0) == traj.Z(137, 0));
  double worst = 0.0;
  for (double t = 0.0; t <= 1.0; t += 0.0123) {
    const auto v = dense_eval(traj, t);
    worst = std::max(worst, std::abs(v.first(0) - std::exp(-t)));
    const auto it = std::upper_bound(traj.times.begin(), traj.times.end(), t);
    if (it != traj.times.begin() && it != traj.times.end()) {
      const auto k = static_cast<Eigen::Index>(it - traj.times.begin());
      CHECK(v.first(0) <= traj.Y(k - 1, 0));
      CHECK(v.first(0) >= traj.Y(k, 0));
      CHECK(v.second(0) <= traj.Z(k - 1, 0));
      CHECK(v.second(0) >= traj.Z(k, 0));
    }
  }
  CHECK(worst <= 1e-8);
  CHECK_THROWS_AS(dense_eval(traj, 1.5), OutOfRange);
  CHECK_THROWS_AS(dense_eval(traj, -0.1), OutOfRange);
}

TEST_CASE("three-bus oracle: manifold, index-1 margin and step halving") {
  const auto dae = three_bus(ThreeBusParams::stable_benchmark());
  const Eigen::VectorXd y0 = vec({0.3, -0.4, 0.08, -0.05});
  auto compare = [&](const Trajectory& a, const Trajectory& b, double from) {
    double diff = 0.0;
    for (Eigen::Index k = 0; k < a.Y.rows(); ++k) {
      if (a.times[static_cast<std::size_t>(k)] < from) continue;
      diff = std::max(diff, (a.Y.row(k) - b.Y.row(2 * k)).cwiseAbs().maxCoeff());
      diff = std::max(diff, (a.Z.row(k) - b.Z.row(2 * k)).cwiseAbs().maxCoeff());
    }
    return diff;
  };
  // The load-angle mode has an eigenvalue near -4.2e3, so the initial layer
  // (well under 10 ms) is only resolved once h * 4.2e3 is small.
  const auto a = solve(dae, y0, vec({1.0}), 8.0, gauss(3, 1e-4));
  const auto b = solve(dae, y0, vec({1.0}), 8.0, gauss(3, 5e-5));
  double g_worst = 0.0, margin = INFINITY;
  for (Eigen::Index k = 0; k < a.Y.rows(); ++k) {
    g_worst = std::max(g_worst, std::abs(eval_g(dae, a.Y.row(k).transpose(), a.Z.row(k).transpose())(0)));
    if (k % 100 == 0) margin = std::min(margin, index1_margin(dae, a.Y.row(k).transpose(), a.Z.row(k).transpose()));
  }
  CHECK(g_worst <= 1e-10);
  CHECK(margin > 1e-8);
  const double full = compare(a, b, 0.0);
  CHECK(full <= 1e-8);

  const auto c = solve(dae, y0, vec({1.0}), 8.0, gauss(3, 1e-3));
  const auto d = solve(dae, y0, vec({1.0}), 8.0, gauss(3, 5e-4));
  const double late = compare(c, d, 0.01);
  CHECK(late <= 1e-8);
  MESSAGE("h=1e-4 vs 5e-5: " << full << "; h=1e-3 vs 5e-4 after 10 ms: " << late
                             << ", over all t: " << compare(c, d, 0.0) << "; index-1 margin " << margin);
}

TEST_CASE("verbatim three-bus parameters lose the algebraic root") {
  // With V2 = 0.05 the load-bus equation loses its real root within a few
  // milliseconds; the solver reports the failure time.
  const auto dae = three_bus();
  try {
    solve(dae, Eigen::VectorXd::Zero(4), vec({0.5}), 1.0, gauss(3, 1e-4));
    FAIL("expected StepFailure");
  } catch (const StepFailure& e) {
    CHECK(e.time() > 0.0);
    CHECK(e.time() < 0.01);
  }
}

TEST_CASE("invalid solver input") {
  CHECK_THROWS_AS(solve(linear_test_dae(), vec({1.0}), vec({1.0}), -1.0, gauss(1, 0.1)), InvalidArgument);
  CHECK_THROWS_AS(solve(linear_test_dae(), vec({1.0}), vec({1.0}), 1.0, gauss(1, 0.0)), InvalidArgument);
}
