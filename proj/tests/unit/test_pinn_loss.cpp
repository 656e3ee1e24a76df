#include <cmath>
#include <random>

#include "doctest.h"
#include "daepinn/errors.hpp"
#include "daepinn/pinn_loss.hpp"
#include "daepinn/reference_solver.hpp"

using namespace daepinn;
using ad::Tape;
using ad::Var;

namespace {

// y' = c * y componentwise with g = z, so the stage sums are plain linear algebra.
SemiExplicitDAE scaled_ode(double c, int n = 1) {
  SemiExplicitDAE d;
  d.name = "scaled";
  d.n = n;
  d.m = 1;
  d.f = [c](Tape&, std::span<const Var> y, std::span<const Var>) {
    std::vector<Var> out;
    for (const Var& v : y) out.push_back(ad::scale(v, c));
    return out;
  };
  d.g = [](Tape&, std::span<const Var>, std::span<const Var> z) { return std::vector<Var>{z[0]}; };
  for (int s = 0; s < n; ++s) d.y_names.push_back("y" + std::to_string(s));
  d.z_names = {"z"};
  return d;
}

StageTensor random_stage(int batch, int slots, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StageTensor t{batch, slots, dim, Tensor(batch, dim * slots)};
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
  return t;
}

StageTensor rows_of(const StageTensor& t, const std::vector<int>& idx) {
  StageTensor out{static_cast<int>(idx.size()), t.slots, t.dim, Tensor(static_cast<Eigen::Index>(idx.size()), t.data.cols())};
  for (std::size_t r = 0; r < idx.size(); ++r) out.data.row(static_cast<Eigen::Index>(r)) = t.data.row(idx[r]);
  return out;
}

Tensor rows_of(const Tensor& t, const std::vector<int>& idx) {
  Tensor out(static_cast<Eigen::Index>(idx.size()), t.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = t.row(idx[r]);
  return out;
}

}  // namespace

TEST_CASE("zero right-hand side leaves predictions unchanged") {
  const ButcherTableau tab = gauss_legendre_tableau(3);
  const StageTensor Y = random_stage(5, 4, 2, 1);
  const StageTensor Z = random_stage(5, 4, 1, 2);
  const StageTensor T = dynamic_residual_targets(Y, Z, tab, 0.1, scaled_ode(0.0, 2));
  CHECK((T.data - Y.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward Euler target by hand") {
  StageTensor Y{1, 2, 1, Tensor(1, 2)};
  Y.data << 0.5, 0.7;
  StageTensor Z{1, 2, 1, Tensor::Zero(1, 2)};
  const StageTensor T = dynamic_residual_targets(Y, Z, backward_euler_tableau(), 0.1, scaled_ode(-1.0));
  CHECK(T.at(0, 0, 0) == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(T.at(0, 1, 0) == doctest::Approx(0.7 - 0.1 * (-0.5)).epsilon(1e-15));
}

TEST_CASE("two-stage targets against dense algebra") {
  const ButcherTableau tab = gauss_legendre_tableau(2);
  const double c = -0.7, h = 0.25;
  const StageTensor Y = random_stage(3, 3, 2, 7);
  const StageTensor Z = random_stage(3, 3, 1, 8);
  const StageTensor T = dynamic_residual_targets(Y, Z, tab, h, scaled_ode(c, 2));
  for (int b = 0; b < 3; ++b) {
    for (int s = 0; s < 2; ++s) {
      Eigen::Vector2d xi(Y.at(b, 0, s), Y.at(b, 1, s));
      const Eigen::Vector2d f = c * xi;
      const Eigen::Vector2d stage = xi - h * tab.a * f;
      CHECK(std::abs(T.at(b, 0, s) - stage(0)) <= 1e-14);
      CHECK(std::abs(T.at(b, 1, s) - stage(1)) <= 1e-14);
      CHECK(std::abs(T.at(b, 2, s) - (Y.at(b, 2, s) - h * tab.b.dot(f))) <= 1e-14);
    }
  }
}

TEST_CASE("loss_f examples") {
  Tensor y_n(1, 1);
  y_n << 1.0;
  StageTensor T{1, 2, 1, Tensor(1, 2)};
  T.data << 0.5, 2.0;
  CHECK(loss_f(y_n, T) == doctest::Approx(0.625).epsilon(1e-15));
  T.data << 1.0, 1.0;
  CHECK(loss_f(y_n, T) == 0.0);

  const Tensor yb = random_stage(4, 1, 3, 11).data;
  StageTensor dev = random_stage(4, 3, 3, 12);
  StageTensor t1 = dev, t2 = dev;
  for (int b = 0; b < 4; ++b) {
    for (int j = 0; j < 3; ++j) {
      for (int s = 0; s < 3; ++s) {
        t1.at(b, j, s) = yb(b, s) + dev.at(b, j, s);
        t2.at(b, j, s) = yb(b, s) + 2.0 * dev.at(b, j, s);
      }
    }
  }
  CHECK(loss_f(yb, t2) == doctest::Approx(4.0 * loss_f(yb, t1)).epsilon(1e-14));
  CHECK_THROWS_AS(loss_f(Tensor(0, 1), StageTensor{0, 2, 1, Tensor(0, 2)}), InvalidArgument);
}

TEST_CASE("loss_g examples") {
  // g = z, so the residuals are the algebraic predictions themselves.
  const SemiExplicitDAE d = scaled_ode(1.0);
  StageTensor Y{1, 2, 1, Tensor::Zero(1, 2)};
  StageTensor Z{1, 2, 1, Tensor(1, 2)};
  Z.data << 0.3, 0.1;
  CHECK(loss_g(Y, Z, d) == doctest::Approx(0.05).epsilon(1e-15));
  Z.data.setZero();
  CHECK(loss_g(Y, Z, d) == 0.0);

  const StageTensor Yr = random_stage(3, 4, 1, 3), Zr = random_stage(3, 4, 1, 4);
  const std::vector<int> twice = {0, 1, 2, 0, 1, 2};
  CHECK(loss_g(rows_of(Yr, twice), rows_of(Zr, twice), d) == doctest::Approx(loss_g(Yr, Zr, d)).epsilon(1e-15));
  CHECK_THROWS_AS(loss_g(StageTensor{0, 2, 1, Tensor(0, 2)}, StageTensor{0, 2, 1, Tensor(0, 2)}, d),
                  InvalidArgument);
}

TEST_CASE("losses are permutation invariant over the batch") {
  const ThreeBusParams p = ThreeBusParams::stable_benchmark();
  const SemiExplicitDAE d = three_bus(p);
  const ButcherTableau tab = gauss_legendre_tableau(2);
  StageTensor Y = random_stage(5, 3, 4, 21);
  StageTensor Z = random_stage(5, 3, 1, 22);
  Z.data.array() += 2.0;  // keep V3 away from zero
  const Tensor yn = random_stage(5, 1, 4, 23).data;
  const std::vector<int> perm = {3, 0, 4, 2, 1};
  const double lf = loss_f(yn, dynamic_residual_targets(Y, Z, tab, 0.1, d));
  const double lf_p = loss_f(rows_of(yn, perm), dynamic_residual_targets(rows_of(Y, perm), rows_of(Z, perm), tab, 0.1, d));
  CHECK(lf_p == doctest::Approx(lf).epsilon(1e-14));
  CHECK(loss_g(rows_of(Y, perm), rows_of(Z, perm), d) == doctest::Approx(loss_g(Y, Z, d)).epsilon(1e-14));
}

TEST_CASE("total_loss") {
  CHECK(total_loss(0.0, 0.0, 1.0, 1.0).total == 0.0);
  CHECK(total_loss(1.5, 0.5, 1.0, 2.0).total == 2.5);
  const double base = total_loss(0.3, 0.7, 1.0, 1.0).total;
  CHECK(total_loss(0.3, 0.7, 8.0, 8.0).total == doctest::Approx(8.0 * base).epsilon(1e-15));
  CHECK_THROWS_AS(total_loss(1.0, 1.0, 0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.0, -1.0), InvalidArgument);
}

TEST_CASE("the IRK solution minimizes the loss") {
  const ThreeBusParams p = ThreeBusParams::stable_benchmark();
  const SemiExplicitDAE d = three_bus(p);
  SolverConfig cfg;
  cfg.tableau = gauss_legendre_tableau(3);
  const int nu = 3, slots = 4, B = 5;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uw(-1.0, 1.0), ud(-0.1, 0.1);
  Tensor yn(B, 4);
  StageTensor Y{B, slots, 4, Tensor(B, 4 * slots)}, Z{B, slots, 1, Tensor(B, slots)};
  for (int b = 0; b < B; ++b) {
    Eigen::VectorXd y(4);
    y << uw(rng), uw(rng), ud(rng), ud(rng);
    const Eigen::VectorXd z = consistent_z(d, y, Eigen::VectorXd::Constant(1, 1.0), 1e-14);
    const IrkStep st = irk_step(d, y, z, cfg, 0.1);
    yn.row(b) = y.transpose();
    for (int s = 0; s < 4; ++s) {
      for (int j = 0; j < nu; ++j) Y.at(b, j, s) = st.xi(j, s);
      Y.at(b, nu, s) = st.y1(s);
    }
    for (int j = 0; j < nu; ++j) Z.at(b, j, 0) = st.zeta(j, 0);
    Z.at(b, nu, 0) = st.z1(0);
  }
  const double lf = loss_f(yn, dynamic_residual_targets(Y, Z, cfg.tableau, 0.1, d));
  const double lg = loss_g(Y, Z, d);
  CHECK(lf <= 1e-12);
  CHECK(lg <= 1e-12);
}

TEST_CASE("tape loss matches the value forms and finite differences") {
  const SemiExplicitDAE d = three_bus(ThreeBusParams::stable_benchmark());
  Eigen::VectorXd lo(4), hi(4);
  lo << -3.0, -3.0, -0.1, -0.1;
  hi << 3.0, 3.0, 0.1, 0.1;
  ArchitectureSpec arch;
  arch.y_width = 4;
  arch.y_depth = 2;
  arch.z_width = 4;
  arch.z_depth = 2;
  const PinnAssembly a = make_assembly(4, 1, gauss_legendre_tableau(2), 0.1, arch, lo, hi, 3);
  Tensor yn(1, 4);
  yn << 0.4, -0.2, 0.05, -0.03;

  const StagePrediction pred = predict_stages(a, yn);
  const double lf = loss_f(yn, dynamic_residual_targets(pred.Y, pred.Z, a.tableau, a.h, d));
  const double lg = loss_g(pred.Y, pred.Z, d);
  const LossBreakdown b = evaluate_loss(a, yn, d, 1.0, 2.0);
  CHECK(b.L_f == doctest::Approx(lf).epsilon(1e-14));
  CHECK(b.L_g == doctest::Approx(lg).epsilon(1e-14));
  CHECK(b.total == doctest::Approx(lf + 2.0 * lg).epsilon(1e-14));

  const Eigen::VectorXd theta = a.flatten();
  const Tensor point = Eigen::Map<const Tensor>(theta.data(), 1, theta.size());
  const double err = ad::grad_check(
      [&](Tape&, Var th) { return composite_loss(a, th, yn, d, 1.0, 2.0).total; }, point, 1e-4);
  CHECK(err <= 1e-5);
}
