#include "daepinn/tableau.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/constants/constants.hpp>

#include "daepinn/errors.hpp"
#include "daepinn/text_io.hpp"

namespace daepinn {

namespace {

using boost::multiprecision::abs;
using boost::multiprecision::cos;

// Legendre P_n and P_n' at x via the three-term recurrence.
void legendre_with_derivative(int n, const ExtendedReal& x, ExtendedReal& p,
                              ExtendedReal& dp) {
  ExtendedReal p0 = 1;
  ExtendedReal p1 = x;
  if (n == 0) {
    p = 1;
    dp = 0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    ExtendedReal p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1);
}

// Gauss nodes on [0, 1] in increasing order together with their weights.
void gauss_nodes_weights(int nu, std::vector<ExtendedReal>& c, std::vector<ExtendedReal>& b) {
  c.assign(static_cast<std::size_t>(nu), ExtendedReal(0));
  b.assign(static_cast<std::size_t>(nu), ExtendedReal(0));
  const ExtendedReal pi = boost::math::constants::pi<ExtendedReal>();
  const ExtendedReal eps = std::numeric_limits<ExtendedReal>::epsilon();
  const int half = (nu + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Roots in decreasing x; x_i near cos(pi (i + 3/4) / (nu + 1/2)).
    ExtendedReal x = cos(pi * (ExtendedReal(i) + ExtendedReal(0.75)) / (ExtendedReal(nu) + ExtendedReal(0.5)));
    const bool middle = (nu % 2 == 1) && (i == half - 1);
    ExtendedReal p, dp;
    if (middle) {
      x = 0;
    } else {
      bool converged = false;
      for (int it = 0; it < 100; ++it) {
        legendre_with_derivative(nu, x, p, dp);
        const ExtendedReal dx = p / dp;
        x -= dx;
        if (abs(dx) <= 8 * eps) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        throw NumericalFailure("Legendre root finding did not converge for nu=" +
                               std::to_string(nu));
      }
    }
    legendre_with_derivative(nu, x, p, dp);
    const ExtendedReal w = 2 / ((1 - x * x) * dp * dp);
    // x_i > 0 maps to the small node (1 - x)/2.
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(nu - 1 - i);
    c[lo] = (1 - x) / 2;
    c[hi] = 1 - c[lo];
    b[lo] = w / 2;
    b[hi] = b[lo];
  }
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::GaussLegendre:
      return "gauss";
    case Scheme::BackwardEuler:
      return "backward_euler";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "gauss" || s == "gauss_legendre" || s == "GaussLegendre") return Scheme::GaussLegendre;
  if (s == "backward_euler" || s == "BackwardEuler" || s == "be") return Scheme::BackwardEuler;
  throw InvalidArgument("unknown scheme '" + s + "' (expected gauss or backward_euler)");
}

TableauT<ExtendedReal> gauss_legendre_tableau_extended(int nu) {
  if (nu < 1 || nu > kMaxGaussStages) {
    throw InvalidArgument("Gauss-Legendre stage count must be in [1, " +
                          std::to_string(kMaxGaussStages) + "], got " + std::to_string(nu));
  }
  TableauT<ExtendedReal> t;
  t.nu = nu;
  gauss_nodes_weights(nu, t.c, t.b);
  const auto n = static_cast<std::size_t>(nu);

  // Barycentric weights lambda_i = 1 / prod_{k != i} (c_i - c_k).
  std::vector<ExtendedReal> lambda(n, ExtendedReal(1));
  for (std::size_t i = 0; i < n; ++i) {
    ExtendedReal prod = 1;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) prod *= t.c[i] - t.c[k];
    }
    lambda[i] = 1 / prod;
  }

  // a_ji = int_0^{c_j} l_i(s) ds = c_j sum_q b_q l_i(c_j c_q); the nu-point
  // rule integrates the degree nu-1 basis exactly.
  t.a.assign(n * n, ExtendedReal(0));
  std::vector<ExtendedReal> basis(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t q = 0; q < n; ++q) {
      const ExtendedReal s = t.c[j] * t.c[q];
      ExtendedReal node_poly = 1;
      std::size_t hit = n;
      for (std::size_t k = 0; k < n; ++k) {
        const ExtendedReal d = s - t.c[k];
        if (d == 0) hit = k;
        node_poly *= d;
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (hit < n) {
          basis[i] = (i == hit) ? ExtendedReal(1) : ExtendedReal(0);
        } else {
          basis[i] = node_poly * lambda[i] / (s - t.c[i]);
        }
      }
      for (std::size_t i = 0; i < n; ++i) t.a[j * n + i] += t.b[q] * basis[i];
    }
    for (std::size_t i = 0; i < n; ++i) t.a[j * n + i] *= t.c[j];
  }
  return t;
}

ButcherTableau gauss_legendre_tableau(int nu) {
  const TableauT<ExtendedReal> ext = gauss_legendre_tableau_extended(nu);
  ButcherTableau t;
  t.nu = nu;
  t.scheme = Scheme::GaussLegendre;
  t.order = 2 * nu;
  t.a.resize(nu, nu);
  t.b.resize(nu);
  t.c.resize(nu);
  for (int j = 0; j < nu; ++j) {
    t.b(j) = static_cast<double>(ext.b[static_cast<std::size_t>(j)]);
    t.c(j) = static_cast<double>(ext.c[static_cast<std::size_t>(j)]);
    for (int i = 0; i < nu; ++i) t.a(j, i) = static_cast<double>(ext.coeff(j, i));
  }
  return t;
}

TableauT<ExtendedReal> backward_euler_tableau_extended() {
  TableauT<ExtendedReal> t;
  t.nu = 1;
  t.a = {ExtendedReal(1)};
  t.b = {ExtendedReal(1)};
  t.c = {ExtendedReal(1)};
  return t;
}

ButcherTableau backward_euler_tableau() {
  ButcherTableau t;
  t.nu = 1;
  t.scheme = Scheme::BackwardEuler;
  t.order = 1;
  t.a = Eigen::MatrixXd::Ones(1, 1);
  t.b = Eigen::VectorXd::Ones(1);
  t.c = Eigen::VectorXd::Ones(1);
  return t;
}

TableauT<double> to_generic(const ButcherTableau& t) {
  TableauT<double> g;
  g.nu = t.nu;
  const auto n = static_cast<std::size_t>(t.nu);
  g.a.resize(n * n);
  g.b.resize(n);
  g.c.resize(n);
  for (int j = 0; j < t.nu; ++j) {
    g.b[static_cast<std::size_t>(j)] = t.b(j);
    g.c[static_cast<std::size_t>(j)] = t.c(j);
    for (int i = 0; i < t.nu; ++i) g.a[static_cast<std::size_t>(j * t.nu + i)] = t.a(j, i);
  }
  return g;
}

ButcherTableau make_tableau(Scheme scheme, int nu) {
  if (scheme == Scheme::BackwardEuler) {
    if (nu != 1) throw InvalidArgument("backward_euler has exactly one stage");
    return backward_euler_tableau();
  }
  return gauss_legendre_tableau(nu);
}

bool OrderReport::all_pass() const {
  return std::all_of(conditions.begin(), conditions.end(),
                     [](const OrderCondition& c) { return c.pass; });
}

double OrderReport::max_residual(char family, int max_k) const {
  double worst = 0.0;
  for (const auto& c : conditions) {
    if (c.family == family && c.k <= max_k) worst = std::max(worst, c.residual);
  }
  return worst;
}

const OrderCondition& OrderReport::find(char family, int k) const {
  for (const auto& c : conditions) {
    if (c.family == family && c.k == k) return c;
  }
  throw InvalidArgument(std::string("no condition ") + family + "(" + std::to_string(k) + ")");
}

OrderReport verify_order_conditions(const ButcherTableau& t, int max_k, double tolerance) {
  if (max_k < 1) throw InvalidArgument("max_k must be >= 1");
  OrderReport report;
  report.tolerance = tolerance;
  const int nu = t.nu;
  for (int k = 1; k <= max_k; ++k) {
    long double quad = 0.0L;
    for (int j = 0; j < nu; ++j) {
      quad += static_cast<long double>(t.b(j)) * std::pow(static_cast<long double>(t.c(j)), k - 1);
    }
    const double rb = static_cast<double>(std::fabs(quad - 1.0L / k));
    report.conditions.push_back({'B', k, rb, rb <= tolerance});

    long double worst = 0.0L;
    for (int j = 0; j < nu; ++j) {
      long double s = 0.0L;
      for (int i = 0; i < nu; ++i) {
        s += static_cast<long double>(t.a(j, i)) * std::pow(static_cast<long double>(t.c(i)), k - 1);
      }
      const long double target = std::pow(static_cast<long double>(t.c(j)), k) / k;
      worst = std::max(worst, std::fabs(s - target));
    }
    const double rc = static_cast<double>(worst);
    report.conditions.push_back({'C', k, rc, rc <= tolerance});
  }
  return report;
}

void check_tableau_invariants(const ButcherTableau& t, double tol) {
  if (t.nu < 1 || t.a.rows() != t.nu || t.a.cols() != t.nu || t.b.size() != t.nu ||
      t.c.size() != t.nu) {
    throw InvalidArgument("tableau dimensions inconsistent with nu=" + std::to_string(t.nu));
  }
  for (int j = 0; j < t.nu; ++j) {
    if (!(t.c(j) > 0.0 && t.c(j) <= 1.0)) {
      throw InvalidArgument("tableau node c[" + std::to_string(j) + "] outside (0, 1]");
    }
    if (j > 0 && !(t.c(j) > t.c(j - 1))) {
      throw InvalidArgument("tableau nodes not strictly increasing");
    }
    if (std::fabs(t.a.row(j).sum() - t.c(j)) > tol) {
      throw InvalidArgument("tableau row " + std::to_string(j) + " does not sum to c_j");
    }
  }
  if (std::fabs(t.b.sum() - 1.0) > tol) throw InvalidArgument("tableau weights do not sum to 1");
}

std::string format_tableau(const ButcherTableau& t) {
  std::ostringstream out;
  out << t.nu << ' ' << t.order << '\n';
  auto row = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt17(v(i));
    out << '\n';
  };
  row(t.c);
  row(t.b);
  for (int j = 0; j < t.nu; ++j) row(t.a.row(j).transpose());
  return out.str();
}

void save_tableau(const ButcherTableau& t, const std::filesystem::path& path) {
  write_text_file(path, format_tableau(t));
}

ButcherTableau parse_tableau(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next_line = [&](const char* what) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw ParseError(std::string("tableau file: missing ") + what, line_no);
    }
    try {
      return parse_doubles(line);
    } catch (const ParseError& e) {
      throw ParseError(std::string("tableau file: ") + e.what(), line_no);
    }
  };
  const auto header = next_line("header");
  if (header.size() != 2) throw ParseError("tableau file: header must be 'nu order'", 1);
  ButcherTableau t;
  t.nu = static_cast<int>(header[0]);
  t.order = static_cast<int>(header[1]);
  if (t.nu < 1 || t.nu != header[0]) throw ParseError("tableau file: bad stage count", 1);
  const auto n = static_cast<std::size_t>(t.nu);
  const auto c = next_line("c vector");
  const auto b = next_line("b vector");
  if (c.size() != n) throw ParseError("tableau file: c has wrong length", 2);
  if (b.size() != n) throw ParseError("tableau file: b has wrong length", 3);
  t.c = Eigen::Map<const Eigen::VectorXd>(c.data(), t.nu);
  t.b = Eigen::Map<const Eigen::VectorXd>(b.data(), t.nu);
  t.a.resize(t.nu, t.nu);
  for (int j = 0; j < t.nu; ++j) {
    const auto r = next_line("a row");
    if (r.size() != n) throw ParseError("tableau file: a row has wrong length", 4 + j);
    for (int i = 0; i < t.nu; ++i) t.a(j, i) = r[static_cast<std::size_t>(i)];
  }
  t.scheme = (t.nu == 1 && t.c(0) == 1.0 && t.order == 1) ? Scheme::BackwardEuler
                                                           : Scheme::GaussLegendre;
  check_tableau_invariants(t);
  return t;
}

ButcherTableau load_tableau(const std::filesystem::path& path) {
  return parse_tableau(read_text_file(path));
}

}  // namespace daepinn
