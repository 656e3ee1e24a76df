#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "daepinn/autodiff.hpp"

namespace daepinn {

/// Componentwise right-hand side: each input Var holds one state component
/// evaluated at a batch of points (all of the same shape), and each output
/// Var is one equation at those points.
using ComponentMap =
    std::function<std::vector<ad::Var>(ad::Tape&, std::span<const ad::Var> y, std::span<const ad::Var> z)>;

/// y' = f(y, z), 0 = g(y, z) with y in R^n and z in R^m.
struct SemiExplicitDAE {
  std::string name;
  int n = 0;
  int m = 0;
  ComponentMap f;
  ComponentMap g;
  std::vector<std::string> y_names;
  std::vector<std::string> z_names;
};

enum class LoadConvention {
  AsPrinted,  // delta3' = -(omega1 - f2 / Dl)
  Standard,   // delta3' = -(omega1 + f2 / Dl)
};

std::string to_string(LoadConvention c);
LoadConvention load_convention_from_string(const std::string& s);

struct ThreeBusParams {
  double M1 = 0.52;
  double M2 = 0.0531;
  double D = 0.05;
  double Dl = 0.005;
  double V1 = 1.02;
  double V2 = 0.05;
  double B12 = 10.0;
  double B13 = 10.0;
  double B23 = 10.0;
  double Pg = -2.0;
  double Pl = 3.0;
  double Ql = 0.1;
  LoadConvention load_convention = LoadConvention::AsPrinted;

  /// V2 = 1.05 with the standard load sign: the variant with bounded
  /// trajectories over [0, 8] s used for training and evaluation runs.
  static ThreeBusParams stable_benchmark();

  /// Names and values in declaration order (excluding load_convention).
  std::vector<std::pair<std::string, double>> named_values() const;
  void set(const std::string& key, double value);
};

/// States (omega1, omega2, delta2, delta3 | V3).
SemiExplicitDAE three_bus(const ThreeBusParams& params = {});

/// y' = -y, 0 = z - y.
SemiExplicitDAE linear_test_dae();

/// Scalar point evaluation helpers built on the same tape code path.
Eigen::VectorXd eval_f(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z);
Eigen::VectorXd eval_g(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z);

/// Evaluates f and g at P points at once; columns are points.
void eval_batch(const SemiExplicitDAE& dae, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Z,
                Eigen::MatrixXd* F, Eigen::MatrixXd* G);

struct Jacobians {
  Eigen::MatrixXd fy, fz, gy, gz;
};

/// Reverse mode, one backward sweep per output component.
Jacobians jacobians(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z);

/// All Jacobians at P points with one tape: sweeps run per output component
/// seeded by the sum over points, which is valid because points are independent.
std::vector<Jacobians> jacobians_batch(const SemiExplicitDAE& dae, const Eigen::MatrixXd& Y,
                                       const Eigen::MatrixXd& Z, Eigen::MatrixXd* F, Eigen::MatrixXd* G);

/// Damped Newton on g(y, .) = 0 from z_guess: ||g||_inf <= tol on return.
Eigen::VectorXd consistent_z(const SemiExplicitDAE& dae, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& z_guess, double tol = 1e-10, int max_iter = 50);

/// Smallest singular value of dg/dz.
double index1_margin(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z);

/// phi as a componentwise map of u (n + m components).
using DescriptorRhs = std::function<std::vector<ad::Var>(ad::Tape&, std::span<const ad::Var> u)>;

struct DescriptorReduction {
  SemiExplicitDAE dae;
  Eigen::MatrixXd S;
  Eigen::MatrixXd T;
  int rank = 0;
  /// (y; z) = T u and back.
  Eigen::VectorXd to_semi_explicit(const Eigen::VectorXd& u) const;
  Eigen::VectorXd to_descriptor(const Eigen::VectorXd& yz) const;
};

/// M u' = phi(u) with M = S diag(I_r, 0) T found by Gaussian elimination with
/// total pivoting; (f; g) = S^{-1} phi(T^{-1} (y; z)).
DescriptorReduction descriptor_to_semi_explicit(const Eigen::MatrixXd& M, DescriptorRhs phi,
                                                double rank_tol = 1e-10);

}  // namespace daepinn
