#include <cmath>
#include <random>

#include "doctest.h"
#include "daepinn/dae_model.hpp"
#include "daepinn/errors.hpp"

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

// Independent transcription of the three-bus right-hand side in plain doubles.
struct ThreeBusOracle {
  ThreeBusParams p;
  double f1(const Eigen::VectorXd& y, double V3) const {
    return p.B12 * p.V1 * p.V2 * std::sin(y(2)) + p.B23 * p.V2 * V3 * std::sin(y(2) - y(3)) + p.Pg;
  }
  double f2(const Eigen::VectorXd& y, double V3) const {
    return p.B13 * p.V1 * V3 * std::sin(y(3)) + p.B23 * p.V2 * V3 * std::sin(y(3) - y(2)) + p.Pl;
  }
  double g1(const Eigen::VectorXd& y, double V3) const {
    return (p.B13 + p.B23) * V3 * V3 - p.B13 * p.V1 * V3 * std::cos(y(3)) -
           p.B23 * p.V2 * V3 * std::cos(y(3) - y(2)) + p.Ql;
  }
  Eigen::VectorXd f(const Eigen::VectorXd& y, double V3) const {
    const double a = f1(y, V3), b = f2(y, V3);
    const double s = p.load_convention == LoadConvention::Standard ? 1.0 : -1.0;
    return vec({(-p.D * y(0) + a + b) / p.M1, (-p.D * y(1) - a) / p.M2, y(1) - y(0), -(y(0) + s * b / p.Dl)});
  }
  double g(const Eigen::VectorXd& y, double V3) const { return -g1(y, V3) / V3; }
};

double p_abs(const ThreeBusParams& p, const Eigen::VectorXd& y, double V3) {
  return std::abs((p.B13 + p.B23) * V3 * V3) + std::abs(p.B13 * p.V1 * V3 * std::cos(y(3))) +
         std::abs(p.B23 * p.V2 * V3 * std::cos(y(3) - y(2))) + std::abs(p.Ql);
}

}  // namespace

TEST_CASE("three-bus defaults") {
  const ThreeBusParams p;
  CHECK(p.M1 == 0.52);
  CHECK(p.M2 == 0.0531);
  CHECK(p.D == 0.05);
  CHECK(p.Dl == 0.005);
  CHECK(p.V1 == 1.02);
  CHECK(p.V2 == 0.05);
  CHECK(p.B12 == 10.0);
  CHECK(p.B13 == 10.0);
  CHECK(p.B23 == 10.0);
  CHECK(p.Pg == -2.0);
  CHECK(p.Pl == 3.0);
  CHECK(p.Ql == 0.1);
  CHECK(p.load_convention == LoadConvention::AsPrinted);
  const auto s = ThreeBusParams::stable_benchmark();
  CHECK(s.V2 == 1.05);
  CHECK(s.load_convention == LoadConvention::Standard);
}

TEST_CASE("three-bus at zero angles") {
  const auto dae = three_bus();
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  for (double V3 : {0.3, 0.7, 1.1}) {
    const Eigen::VectorXd f = eval_f(dae, y, vec({V3}));
    CHECK(f(2) == 0.0);
    CHECK(f(3) == doctest::Approx(600.0).epsilon(1e-14));
    // f1 = Pg; omega2' = -f1 / M2.
    CHECK(f(1) == doctest::Approx(2.0 / 0.0531).epsilon(1e-14));
    const double bracket = 20.0 * V3 * V3 - 10.7 * V3 + 0.1;
    CHECK(eval_g(dae, y, vec({V3}))(0) == doctest::Approx(-bracket / V3).epsilon(1e-13));
  }
}

TEST_CASE("three-bus matches an independent transcription") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ang(-3.2, 3.2), small(-0.5, 0.5), volt(0.3, 1.2);
  for (auto params : {ThreeBusParams{}, ThreeBusParams::stable_benchmark()}) {
    const auto dae = three_bus(params);
    const ThreeBusOracle ref{params};
    double worst_g = 0.0, worst_f = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const Eigen::VectorXd y = vec({ang(rng), ang(rng), small(rng), small(rng)});
      const double V3 = volt(rng);
      const double g = eval_g(dae, y, vec({V3}))(0);
      const double gr = ref.g(y, V3);
      // g1 is a sum of cancelling terms; measure against their magnitude.
      const double terms = ((p_abs(params, y, V3)) / V3);
      worst_g = std::max(worst_g, std::abs(g - gr) / terms);
      const Eigen::VectorXd f = eval_f(dae, y, vec({V3}));
      const Eigen::VectorXd fr = ref.f(y, V3);
      worst_f = std::max(worst_f, ((f - fr).cwiseAbs().array() / (fr.cwiseAbs().array() + 1e-12)).maxCoeff());
    }
    CHECK(worst_g <= 1e-14);
    CHECK(worst_f <= 1e-12);
  }
}

TEST_CASE("zero voltage is a division by zero") {
  CHECK_THROWS_AS(eval_g(three_bus(), Eigen::VectorXd::Zero(4), vec({0.0})), DivisionByZero);
}

TEST_CASE("consistent_z selects the root by basin") {
  const auto dae = three_bus();
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  const double disc = std::sqrt(10.7 * 10.7 - 8.0);
  const double hi = (10.7 + disc) / 40.0;
  const double lo = (10.7 - disc) / 40.0;
  const Eigen::VectorXd zh = consistent_z(dae, y, vec({0.6}));
  const Eigen::VectorXd zl = consistent_z(dae, y, vec({0.01}));
  CHECK(std::abs(zh(0) - hi) <= 1e-12);
  CHECK(std::abs(zl(0) - lo) <= 1e-12);
  CHECK(std::abs(eval_g(dae, y, zh)(0)) <= 1e-10);
  CHECK(std::abs(eval_g(dae, y, zl)(0)) <= 1e-10);
}

TEST_CASE("consistent_z always lands on the manifold") {
  const auto dae = three_bus(ThreeBusParams::stable_benchmark());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> w(-0.5, 0.5), d(-0.1, 0.1);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd y = vec({w(rng), w(rng), d(rng), d(rng)});
    const Eigen::VectorXd z = consistent_z(dae, y, vec({1.0}));
    CHECK(std::abs(eval_g(dae, y, z)(0)) <= 1e-10);
  }
}

TEST_CASE("consistent_z on the linear DAE") {
  const auto dae = linear_test_dae();
  CHECK(consistent_z(dae, vec({2.0}), vec({-7.0}))(0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(jacobians(dae, vec({2.0}), vec({0.3})).gz(0, 0) == 1.0);
}

TEST_CASE("consistent_z failures") {
  // g(y, z) = z^2 + 1 has no real root; Newton stalls or runs out.
  SemiExplicitDAE no_root = linear_test_dae();
  no_root.g = [](Tape&, std::span<const Var>, std::span<const Var> z) {
    return std::vector<Var>{ad::square(z[0]) + 1.0};
  };
  CHECK_THROWS_AS(consistent_z(no_root, vec({0.0}), vec({0.5})), NumericalFailure);
  // g independent of z: singular Jacobian.
  SemiExplicitDAE singular = linear_test_dae();
  singular.g = [](Tape&, std::span<const Var> y, std::span<const Var> z) {
    return std::vector<Var>{y[0] + ad::scale(z[0], 0.0) + 1.0};
  };
  CHECK_THROWS_AS(consistent_z(singular, vec({0.0}), vec({0.5})), IndexViolation);
  try {
    consistent_z(no_root, vec({0.0}), vec({0.5}));
  } catch (const NumericalFailure& e) {
    CHECK(e.last_residual() >= 1.0);
  }
}

TEST_CASE("jacobians by reverse mode") {
  const auto dae = three_bus();
  const Jacobians J0 = jacobians(dae, Eigen::VectorXd::Zero(4), vec({0.8}));
  // dg1/d delta2 carries sin(delta3 - delta2) only.
  CHECK(J0.gy(0, 2) == 0.0);

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ang(-1.0, 1.0), volt(0.5, 1.2);
  for (auto params : {ThreeBusParams{}, ThreeBusParams::stable_benchmark()}) {
    const auto d = three_bus(params);
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd y = vec({ang(rng), ang(rng), ang(rng), ang(rng)});
      const Eigen::VectorXd z = vec({volt(rng)});
      const Jacobians J = jacobians(d, y, z);
      const double step = 1e-6;
      for (int c = 0; c < 5; ++c) {
        Eigen::VectorXd yp = y, ym = y, zp = z, zm = z;
        if (c < 4) {
          yp(c) += step;
          ym(c) -= step;
        } else {
          zp(0) += step;
          zm(0) -= step;
        }
        const Eigen::VectorXd df = (eval_f(d, yp, zp) - eval_f(d, ym, zm)) / (2 * step);
        const Eigen::VectorXd dg = (eval_g(d, yp, zp) - eval_g(d, ym, zm)) / (2 * step);
        const Eigen::VectorXd af = c < 4 ? Eigen::VectorXd(J.fy.col(c)) : Eigen::VectorXd(J.fz.col(0));
        const Eigen::VectorXd ag = c < 4 ? Eigen::VectorXd(J.gy.col(c)) : Eigen::VectorXd(J.gz.col(0));
        const double scale_f = std::max(1.0, df.cwiseAbs().maxCoeff());
        const double scale_g = std::max(1.0, dg.cwiseAbs().maxCoeff());
        CHECK((af - df).cwiseAbs().maxCoeff() <= 1e-6 * scale_f);
        CHECK((ag - dg).cwiseAbs().maxCoeff() <= 1e-6 * scale_g);
      }
    }
  }
}

TEST_CASE("batched Jacobians agree with single-point ones") {
  const auto dae = three_bus(ThreeBusParams::stable_benchmark());
  Eigen::MatrixXd Y(4, 3), Z(1, 3);
  Y << 0.1, -0.2, 0.3, 0.0, 0.4, -0.1, 0.05, -0.05, 0.02, -0.01, 0.03, 0.07;
  Z << 0.9, 1.0, 1.1;
  Eigen::MatrixXd F, G;
  const auto Js = jacobians_batch(dae, Y, Z, &F, &G);
  for (int p = 0; p < 3; ++p) {
    const auto J = jacobians(dae, Y.col(p), Z.col(p));
    CHECK(J.fy == Js[p].fy);
    CHECK(J.gz == Js[p].gz);
    CHECK(F.col(p) == eval_f(dae, Y.col(p), Z.col(p)));
  }
}

TEST_CASE("descriptor in canonical form") {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2, 2);
  M(0, 0) = 1.0;
  auto phi = [](Tape&, std::span<const Var> u) { return std::vector<Var>{u[1], u[0] - u[1]}; };
  const auto red = descriptor_to_semi_explicit(M, phi);
  CHECK(red.rank == 1);
  CHECK(red.S.isIdentity(0.0));
  CHECK(red.T.isIdentity(0.0));
  CHECK(red.dae.n == 1);
  CHECK(red.dae.m == 1);
  const Eigen::VectorXd y = vec({0.7}), z = vec({-0.4});
  CHECK(eval_f(red.dae, y, z)(0) == -0.4);
  CHECK(eval_g(red.dae, y, z)(0) == doctest::Approx(1.1));
}

TEST_CASE("descriptor needing a column pivot") {
  Eigen::MatrixXd M(2, 2);
  M << 0, 1, 0, 0;
  auto phi = [](Tape&, std::span<const Var> u) { return std::vector<Var>{u[1], u[0]}; };
  const auto red = descriptor_to_semi_explicit(M, phi);
  CHECK(red.rank == 1);
  Eigen::MatrixXd canon = Eigen::MatrixXd::Zero(2, 2);
  canon(0, 0) = 1.0;
  CHECK((red.S * canon * red.T - M).norm() <= 1e-12);
  // By hand: y = u2, z = u1, so y' = y and 0 = z.
  const Eigen::VectorXd u = vec({0.3, -1.7});
  const Eigen::VectorXd yz = red.to_semi_explicit(u);
  CHECK(yz(0) == -1.7);
  CHECK(yz(1) == 0.3);
  CHECK(eval_f(red.dae, yz.head(1), yz.tail(1))(0) == doctest::Approx(-1.7));
  CHECK(eval_g(red.dae, yz.head(1), yz.tail(1))(0) == doctest::Approx(0.3));
  CHECK((red.to_descriptor(yz) - u).norm() <= 1e-15);
}

TEST_CASE("descriptor reconstruction on random rank-deficient matrices") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const int N = 3 + trial % 4;
    const int r = 1 + trial % (N - 1);
    Eigen::MatrixXd A(N, r), B(r, N);
    for (int i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
    for (int i = 0; i < B.size(); ++i) B.data()[i] = nd(rng);
    const Eigen::MatrixXd M = A * B;
    auto phi = [](Tape&, std::span<const Var> u) { return std::vector<Var>(u.begin(), u.end()); };
    const auto red = descriptor_to_semi_explicit(M, phi);
    CHECK(red.rank == r);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(N, N);
    D.topLeftCorner(r, r).setIdentity();
    CHECK((red.S * D * red.T - M).norm() <= 1e-12 * M.norm());
  }
}

TEST_CASE("descriptor errors") {
  auto phi = [](Tape&, std::span<const Var> u) { return std::vector<Var>(u.begin(), u.end()); };
  CHECK_THROWS_AS(descriptor_to_semi_explicit(Eigen::MatrixXd::Identity(2, 2), phi), NotADae);
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(2, 2);
  M(1, 1) = 1e-10;
  CHECK_THROWS_AS(descriptor_to_semi_explicit(M, phi), AmbiguousRank);
}
