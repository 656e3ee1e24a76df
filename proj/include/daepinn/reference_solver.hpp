#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "daepinn/dae_model.hpp"
#include "daepinn/errors.hpp"
#include "daepinn/tableau.hpp"

namespace daepinn {

// ---------------------------------------------------------------------------
// Scalar-generic core. The double instantiation serves every production path;
// the ExtendedReal one exists so convergence orders can be measured below
// double roundoff.

template <class S>
using Vec = std::vector<S>;

template <class S>
struct PointJacobian {
  Vec<S> fy, fz, gy, gz;  // row-major n x n, n x m, m x n, m x m
};

template <class S>
class PointModel {
 public:
  virtual ~PointModel() = default;
  virtual int n() const = 0;
  virtual int m() const = 0;
  /// f, g and optionally Jacobians at several points at once.
  virtual void evaluate(const std::vector<Vec<S>>& ys, const std::vector<Vec<S>>& zs, std::vector<Vec<S>>* f,
                        std::vector<Vec<S>>* g, std::vector<PointJacobian<S>>* jac) const = 0;
  /// Root of g(y, .) near guess with ||g||_inf <= tol.
  virtual Vec<S> consistent_z(const Vec<S>& y, const Vec<S>& guess, const S& tol) const = 0;
};

namespace detail {

template <class S>
S abs_of(const S& v) {
  using std::abs;
  return abs(v);
}

template <class S>
double to_double(const S& v) {
  return static_cast<double>(v);
}

/// In-place LU with partial pivoting on a row-major N x N matrix; solves A x = rhs.
template <class S>
Vec<S> lu_solve(Vec<S> A, Vec<S> rhs, int N) {
  for (int k = 0; k < N; ++k) {
    int p = k;
    S best = abs_of(A[static_cast<std::size_t>(k * N + k)]);
    for (int i = k + 1; i < N; ++i) {
      const S v = abs_of(A[static_cast<std::size_t>(i * N + k)]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best == S(0)) throw NumericalFailure("singular Newton matrix", 0.0);
    if (p != k) {
      for (int j = 0; j < N; ++j) std::swap(A[static_cast<std::size_t>(k * N + j)], A[static_cast<std::size_t>(p * N + j)]);
      std::swap(rhs[static_cast<std::size_t>(k)], rhs[static_cast<std::size_t>(p)]);
    }
    const S piv = A[static_cast<std::size_t>(k * N + k)];
    for (int i = k + 1; i < N; ++i) {
      const S l = A[static_cast<std::size_t>(i * N + k)] / piv;
      if (l == S(0)) continue;
      A[static_cast<std::size_t>(i * N + k)] = S(0);
      for (int j = k + 1; j < N; ++j) A[static_cast<std::size_t>(i * N + j)] -= l * A[static_cast<std::size_t>(k * N + j)];
      rhs[static_cast<std::size_t>(i)] -= l * rhs[static_cast<std::size_t>(k)];
    }
  }
  for (int i = N - 1; i >= 0; --i) {
    S acc = rhs[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < N; ++j) acc -= A[static_cast<std::size_t>(i * N + j)] * rhs[static_cast<std::size_t>(j)];
    rhs[static_cast<std::size_t>(i)] = acc / A[static_cast<std::size_t>(i * N + i)];
  }
  return rhs;
}

}  // namespace detail

template <class S>
struct StepResultT {
  Vec<S> y1, z1;
  std::vector<Vec<S>> xi, zeta;  // nu stage values
  int iterations = 0;
  S residual = S(0);
};

/// One IRK step: Newton on the coupled stage system
///   xi_j - y_n - h sum_i a_ji f(xi_i, zeta_i) = 0,  g(xi_j, zeta_j) = 0,
/// then y_{n+1} from the weights and z_{n+1} by solving g(y_{n+1}, .) = 0.
/// Newton steps are halved (up to 10 times) until the residual decreases;
/// a step that cannot decrease a residual already within 100 tol is accepted
/// as converged at the roundoff floor.
template <class S>
StepResultT<S> irk_step_generic(const PointModel<S>& model, const TableauT<S>& tab, const Vec<S>& y_n,
                                const Vec<S>& z_n, const S& h, const S& tol, int max_iter, double t_n = 0.0) {
  const int n = model.n();
  const int m = model.m();
  const int nu = tab.nu;
  const int blk = n + m;
  const int N = nu * blk;
  Vec<S> x(static_cast<std::size_t>(N));
  for (int j = 0; j < nu; ++j) {
    for (int c = 0; c < n; ++c) x[static_cast<std::size_t>(j * blk + c)] = y_n[static_cast<std::size_t>(c)];
    for (int c = 0; c < m; ++c) x[static_cast<std::size_t>(j * blk + n + c)] = z_n[static_cast<std::size_t>(c)];
  }
  auto split = [&](const Vec<S>& v, std::vector<Vec<S>>& ys, std::vector<Vec<S>>& zs) {
    ys.assign(static_cast<std::size_t>(nu), Vec<S>(static_cast<std::size_t>(n)));
    zs.assign(static_cast<std::size_t>(nu), Vec<S>(static_cast<std::size_t>(m)));
    for (int j = 0; j < nu; ++j) {
      for (int c = 0; c < n; ++c) ys[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = v[static_cast<std::size_t>(j * blk + c)];
      for (int c = 0; c < m; ++c) zs[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = v[static_cast<std::size_t>(j * blk + n + c)];
    }
  };
  struct Eval {
    std::vector<Vec<S>> ys, zs, f, g;
    std::vector<PointJacobian<S>> jac;
    Vec<S> R;
    S norm = S(0);
  };
  auto evaluate = [&](const Vec<S>& v, bool with_jac, Eval& e) {
    split(v, e.ys, e.zs);
    model.evaluate(e.ys, e.zs, &e.f, &e.g, with_jac ? &e.jac : nullptr);
    e.R.assign(static_cast<std::size_t>(N), S(0));
    e.norm = S(0);
    for (int j = 0; j < nu; ++j) {
      for (int c = 0; c < n; ++c) {
        S acc = S(0);
        for (int i = 0; i < nu; ++i) acc += tab.coeff(j, i) * e.f[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        const S r = e.ys[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] - y_n[static_cast<std::size_t>(c)] - h * acc;
        e.R[static_cast<std::size_t>(j * blk + c)] = r;
      }
      for (int c = 0; c < m; ++c) e.R[static_cast<std::size_t>(j * blk + n + c)] = e.g[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
    }
    for (const S& r : e.R) e.norm = std::max(e.norm, detail::abs_of(r));
    using std::isfinite;
    if (!isfinite(detail::to_double(e.norm))) throw NumericalFailure("non-finite stage residual", INFINITY);
  };
  auto fail = [&](const std::string& why, const S& res) -> StepFailure {
    return StepFailure("IRK step at t=" + std::to_string(t_n) + ": " + why + "; try halving the step",
                       detail::to_double(res), t_n);
  };

  Eval cur;
  try {
    evaluate(x, true, cur);
  } catch (const Error& e) {
    throw fail(e.what(), S(INFINITY));
  }
  int it = 0;
  while (cur.norm > tol) {
    if (it == max_iter) throw fail("Newton did not converge in " + std::to_string(max_iter) + " iterations", cur.norm);
    ++it;
    Vec<S> J(static_cast<std::size_t>(N) * static_cast<std::size_t>(N), S(0));
    auto at = [&](int r, int c) -> S& { return J[static_cast<std::size_t>(r) * static_cast<std::size_t>(N) + static_cast<std::size_t>(c)]; };
    for (int j = 0; j < nu; ++j) {
      for (int i = 0; i < nu; ++i) {
        const S ha = h * tab.coeff(j, i);
        const PointJacobian<S>& Ji = cur.jac[static_cast<std::size_t>(i)];
        for (int r = 0; r < n; ++r) {
          for (int c = 0; c < n; ++c) at(j * blk + r, i * blk + c) = -ha * Ji.fy[static_cast<std::size_t>(r * n + c)];
          for (int c = 0; c < m; ++c) at(j * blk + r, i * blk + n + c) = -ha * Ji.fz[static_cast<std::size_t>(r * m + c)];
        }
      }
      for (int r = 0; r < n; ++r) at(j * blk + r, j * blk + r) += S(1);
      const PointJacobian<S>& Jj = cur.jac[static_cast<std::size_t>(j)];
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) at(j * blk + n + r, j * blk + c) = Jj.gy[static_cast<std::size_t>(r * n + c)];
        for (int c = 0; c < m; ++c) at(j * blk + n + r, j * blk + n + c) = Jj.gz[static_cast<std::size_t>(r * m + c)];
      }
    }
    Vec<S> rhs(cur.R.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = -cur.R[k];
    Vec<S> dx;
    try {
      dx = detail::lu_solve(std::move(J), std::move(rhs), N);
    } catch (const NumericalFailure&) {
      throw fail("singular Newton matrix", cur.norm);
    }
    S lambda = S(1);
    bool accepted = false;
    for (int halving = 0; halving <= 10; ++halving, lambda /= S(2)) {
      Vec<S> trial = x;
      for (int k = 0; k < N; ++k) trial[static_cast<std::size_t>(k)] += lambda * dx[static_cast<std::size_t>(k)];
      Eval next;
      try {
        evaluate(trial, true, next);
      } catch (const Error&) {
        continue;
      }
      if (next.norm < cur.norm) {
        x = std::move(trial);
        cur = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (cur.norm <= S(100) * tol) break;
      throw fail("Newton stalled", cur.norm);
    }
  }

  StepResultT<S> out;
  out.iterations = it;
  out.residual = cur.norm;
  out.xi = cur.ys;
  out.zeta = cur.zs;
  out.y1 = y_n;
  for (int c = 0; c < n; ++c) {
    S acc = S(0);
    for (int j = 0; j < nu; ++j) acc += tab.b[static_cast<std::size_t>(j)] * cur.f[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
    out.y1[static_cast<std::size_t>(c)] += h * acc;
  }
  try {
    out.z1 = model.consistent_z(out.y1, cur.zs.back(), tol);
  } catch (const Error& e) {
    throw fail(std::string("endpoint algebraic solve failed: ") + e.what(), cur.norm);
  }
  return out;
}

/// y at t_end from fixed steps of size h (last step shortened to land on t_end).
template <class S>
Vec<S> solve_endpoint_generic(const PointModel<S>& model, const TableauT<S>& tab, const Vec<S>& y0,
                              const Vec<S>& z_guess, const S& t_end, const S& h, const S& tol, int max_iter) {
  Vec<S> y = y0;
  Vec<S> z = model.consistent_z(y0, z_guess, tol);
  using std::ceil;
  const long steps = std::max(1L, static_cast<long>(detail::to_double(ceil(t_end / h - S(1e-9)))));
  S t = S(0);
  for (long k = 0; k < steps; ++k) {
    const S t_next = k + 1 == steps ? t_end : S(k + 1) * h;
    auto r = irk_step_generic(model, tab, y, z, t_next - t, tol, max_iter, detail::to_double(t));
    y = std::move(r.y1);
    z = std::move(r.z1);
    t = t_next;
  }
  return y;
}

/// y' = -y, 0 = z - y in any scalar type.
template <class S>
class LinearDae final : public PointModel<S> {
 public:
  int n() const override { return 1; }
  int m() const override { return 1; }
  void evaluate(const std::vector<Vec<S>>& ys, const std::vector<Vec<S>>& zs, std::vector<Vec<S>>* f,
                std::vector<Vec<S>>* g, std::vector<PointJacobian<S>>* jac) const override {
    const std::size_t P = ys.size();
    if (f) f->assign(P, Vec<S>(1));
    if (g) g->assign(P, Vec<S>(1));
    if (jac) jac->assign(P, PointJacobian<S>{{S(-1)}, {S(0)}, {S(-1)}, {S(1)}});
    for (std::size_t p = 0; p < P; ++p) {
      if (f) (*f)[p][0] = -ys[p][0];
      if (g) (*g)[p][0] = zs[p][0] - ys[p][0];
    }
  }
  Vec<S> consistent_z(const Vec<S>& y, const Vec<S>&, const S&) const override { return y; }
};

/// Double-precision adapter over a SemiExplicitDAE (autodiff Jacobians).
class DaePointModel final : public PointModel<double> {
 public:
  explicit DaePointModel(const SemiExplicitDAE& dae) : dae_(dae) {}
  int n() const override { return dae_.n; }
  int m() const override { return dae_.m; }
  void evaluate(const std::vector<Vec<double>>& ys, const std::vector<Vec<double>>& zs,
                std::vector<Vec<double>>* f, std::vector<Vec<double>>* g,
                std::vector<PointJacobian<double>>* jac) const override;
  Vec<double> consistent_z(const Vec<double>& y, const Vec<double>& guess, const double& tol) const override;

 private:
  const SemiExplicitDAE& dae_;
};

// ---------------------------------------------------------------------------
// Double-precision interface.

struct SolverConfig {
  ButcherTableau tableau = gauss_legendre_tableau(3);
  double h_ref = 1e-3;
  double newton_tol = 1e-12;
  int newton_max_iter = 50;
};

struct IrkStep {
  Eigen::VectorXd y1, z1;
  Eigen::MatrixXd xi;    // nu x n
  Eigen::MatrixXd zeta;  // nu x m
  int iterations = 0;
  double residual = 0.0;
};

/// Step of size h (defaults to cfg.h_ref).
IrkStep irk_step(const SemiExplicitDAE& dae, const Eigen::VectorXd& y_n, const Eigen::VectorXd& z_n,
                 const SolverConfig& cfg, double h = 0.0, double t_n = 0.0);

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd Y;     // rows are samples
  Eigen::MatrixXd Z;
  Eigen::MatrixXd Ydot;  // f at each sample; empty when unavailable
  std::map<std::string, std::string> meta;

  std::size_t size() const { return times.size(); }
};

/// Consistent initialization of z0 from z_guess, then fixed steps to t_end.
/// The first row is the initial point.
Trajectory solve(const SemiExplicitDAE& dae, const Eigen::VectorXd& y0, const Eigen::VectorXd& z_guess,
                 double t_end, const SolverConfig& cfg);

/// Cubic Hermite in y (using Ydot), linear in z.
std::pair<Eigen::VectorXd, Eigen::VectorXd> dense_eval(const Trajectory& traj, double t);

/// CSV with header t,<y names>,<z names>; 17 significant digits.
std::string trajectory_csv(const Trajectory& traj, const std::vector<std::string>& y_names,
                           const std::vector<std::string>& z_names);

}  // namespace daepinn
