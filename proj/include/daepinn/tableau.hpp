#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace daepinn {

/// 113-bit significand; used wherever double loses the digits we need.
using ExtendedReal = boost::multiprecision::cpp_bin_float_quad;

enum class Scheme { GaussLegendre, BackwardEuler };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

/// Coefficients of an implicit Runge-Kutta scheme. a(j, i) couples stage j to
/// stage i; c holds the stage nodes as fractions of the step.
struct ButcherTableau {
  int nu = 0;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  Scheme scheme = Scheme::GaussLegendre;
  int order = 0;
};

/// Same coefficients in an arbitrary scalar type, row-major a.
template <class Real>
struct TableauT {
  int nu = 0;
  std::vector<Real> a;
  std::vector<Real> b;
  std::vector<Real> c;

  const Real& coeff(int j, int i) const { return a[static_cast<std::size_t>(j * nu + i)]; }
};

inline constexpr int kMaxGaussStages = 100;

/// Gauss-Legendre collocation tableau with nu stages (1 <= nu <= 100).
/// Nodes, weights and the stage integrals are computed in ExtendedReal and
/// rounded once at the end.
ButcherTableau gauss_legendre_tableau(int nu);
TableauT<ExtendedReal> gauss_legendre_tableau_extended(int nu);

ButcherTableau backward_euler_tableau();
TableauT<ExtendedReal> backward_euler_tableau_extended();

TableauT<double> to_generic(const ButcherTableau& t);

struct OrderCondition {
  char family = 'B';  // 'B' quadrature, 'C' stage order
  int k = 1;
  double residual = 0.0;
  bool pass = false;
};

struct OrderReport {
  std::vector<OrderCondition> conditions;
  double tolerance = 1e-9;

  bool all_pass() const;
  /// Largest residual among conditions of `family` with k <= max_k.
  double max_residual(char family, int max_k) const;
  const OrderCondition& find(char family, int k) const;
};

/// Residuals of B(k) = |sum_j b_j c_j^{k-1} - 1/k| and
/// C(k) = max_j |sum_i a_ji c_i^{k-1} - c_j^k / k| for k = 1..max_k.
OrderReport verify_order_conditions(const ButcherTableau& t, int max_k,
                                    double tolerance = 1e-9);

/// Throws InvalidArgument if node ordering, row sums or weight sum are off.
void check_tableau_invariants(const ButcherTableau& t, double tol = 1e-9);

/// Plain-text interchange format: "nu order", c, b, then nu rows of a,
/// 17 significant digits, space separated.
void save_tableau(const ButcherTableau& t, const std::filesystem::path& path);
std::string format_tableau(const ButcherTableau& t);
ButcherTableau load_tableau(const std::filesystem::path& path);
ButcherTableau parse_tableau(const std::string& text);

/// Resolves a scheme name plus stage count to a tableau.
ButcherTableau make_tableau(Scheme scheme, int nu);

}  // namespace daepinn
