#include "daepinn/dae_model.hpp"

#include <cmath>

#include "daepinn/errors.hpp"

namespace daepinn {

using ad::Tape;
using ad::Tensor;
using ad::Var;

std::string to_string(LoadConvention c) { return c == LoadConvention::Standard ? "standard" : "as_printed"; }

LoadConvention load_convention_from_string(const std::string& s) {
  if (s == "as_printed") return LoadConvention::AsPrinted;
  if (s == "standard") return LoadConvention::Standard;
  throw InvalidArgument("unknown load convention '" + s + "' (expected as_printed or standard)");
}

ThreeBusParams ThreeBusParams::stable_benchmark() {
  ThreeBusParams p;
  p.V2 = 1.05;
  p.load_convention = LoadConvention::Standard;
  return p;
}

std::vector<std::pair<std::string, double>> ThreeBusParams::named_values() const {
  return {{"M1", M1}, {"M2", M2}, {"D", D},     {"Dl", Dl},     {"V1", V1}, {"V2", V2},
          {"B12", B12}, {"B13", B13}, {"B23", B23}, {"Pg", Pg}, {"Pl", Pl}, {"Ql", Ql}};
}

void ThreeBusParams::set(const std::string& key, double value) {
  double* slots[] = {&M1, &M2, &D, &Dl, &V1, &V2, &B12, &B13, &B23, &Pg, &Pl, &Ql};
  const char* names[] = {"M1", "M2", "D", "Dl", "V1", "V2", "B12", "B13", "B23", "Pg", "Pl", "Ql"};
  for (std::size_t i = 0; i < std::size(names); ++i) {
    if (key == names[i]) {
      *slots[i] = value;
      return;
    }
  }
  throw InvalidArgument("unknown three-bus parameter '" + key + "'");
}

SemiExplicitDAE three_bus(const ThreeBusParams& p) {
  for (const auto& [name, v] : p.named_values()) {
    if (!std::isfinite(v)) throw InvalidArgument("three-bus parameter " + name + " is not finite");
  }
  if (p.M1 == 0.0 || p.M2 == 0.0 || p.Dl == 0.0) {
    throw InvalidArgument("three-bus inertia and load damping must be nonzero");
  }
  if (p.B13 + p.B23 == 0.0) throw InvalidArgument("three-bus V3 coefficient B13 + B23 must be nonzero");

  SemiExplicitDAE dae;
  dae.name = "three_bus";
  dae.n = 4;
  dae.m = 1;
  dae.y_names = {"w1", "w2", "d2", "d3"};
  dae.z_names = {"V3"};

  // f1, f2 share the same trig terms across f and g; each call rebuilds them
  // on the caller's tape.
  struct Aux {
    Var f1, f2, g1;
  };
  auto aux = [p](std::span<const Var> y, std::span<const Var> z) {
    const Var d2 = y[2];
    const Var d3 = y[3];
    const Var V3 = z[0];
    const Var d23 = d2 - d3;
    const Var d32 = d3 - d2;
    Aux a;
    a.f1 = ad::shift(ad::scale(ad::sin(d2), p.B12 * p.V1 * p.V2) + ad::scale(V3 * ad::sin(d23), p.B23 * p.V2),
                     p.Pg);
    a.f2 = ad::shift(ad::scale(V3 * ad::sin(d3), p.B13 * p.V1) + ad::scale(V3 * ad::sin(d32), p.B23 * p.V2),
                     p.Pl);
    a.g1 = ad::shift(ad::scale(ad::square(V3), p.B13 + p.B23) - ad::scale(V3 * ad::cos(d3), p.B13 * p.V1) -
                         ad::scale(V3 * ad::cos(d32), p.B23 * p.V2),
                     p.Ql);
    return a;
  };

  dae.f = [p, aux](Tape&, std::span<const Var> y, std::span<const Var> z) {
    const Aux a = aux(y, z);
    const Var w1 = y[0];
    const Var w2 = y[1];
    std::vector<Var> out;
    out.push_back(ad::scale(ad::scale(w1, -p.D) + a.f1 + a.f2, 1.0 / p.M1));
    out.push_back(ad::scale(ad::scale(w2, -p.D) - a.f1, 1.0 / p.M2));
    out.push_back(w2 - w1);
    const double sign = p.load_convention == LoadConvention::Standard ? 1.0 : -1.0;
    out.push_back(ad::scale(w1 + ad::scale(a.f2, sign / p.Dl), -1.0));
    return out;
  };
  dae.g = [aux](Tape&, std::span<const Var> y, std::span<const Var> z) {
    const Aux a = aux(y, z);
    return std::vector<Var>{ad::scale(ad::div(a.g1, z[0]), -1.0)};
  };
  return dae;
}

SemiExplicitDAE linear_test_dae() {
  SemiExplicitDAE dae;
  dae.name = "linear";
  dae.n = 1;
  dae.m = 1;
  dae.y_names = {"y"};
  dae.z_names = {"z"};
  dae.f = [](Tape&, std::span<const Var> y, std::span<const Var>) { return std::vector<Var>{-y[0]}; };
  dae.g = [](Tape&, std::span<const Var> y, std::span<const Var> z) { return std::vector<Var>{z[0] - y[0]}; };
  return dae;
}

namespace {

struct Recorded {
  std::vector<Var> y, z, f, g;
};

Recorded record(Tape& tape, const SemiExplicitDAE& dae, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Z,
                bool as_variables) {
  if (Y.rows() != dae.n || Z.rows() != dae.m || Y.cols() != Z.cols()) {
    throw InvalidArgument(dae.name + ": expected " + std::to_string(dae.n) + " + " + std::to_string(dae.m) +
                          " state rows, got " + std::to_string(Y.rows()) + " + " + std::to_string(Z.rows()));
  }
  Recorded r;
  auto leaf = [&](const Eigen::MatrixXd& M, int row) {
    Tensor t = M.row(row);
    return as_variables ? tape.variable(std::move(t)) : tape.constant(std::move(t));
  };
  for (int i = 0; i < dae.n; ++i) r.y.push_back(leaf(Y, i));
  for (int i = 0; i < dae.m; ++i) r.z.push_back(leaf(Z, i));
  r.f = dae.f(tape, r.y, r.z);
  r.g = dae.g(tape, r.y, r.z);
  if (static_cast<int>(r.f.size()) != dae.n || static_cast<int>(r.g.size()) != dae.m) {
    throw InvalidArgument(dae.name + ": right-hand side returned the wrong number of components");
  }
  return r;
}

void gather(const std::vector<Var>& parts, Eigen::MatrixXd* out, Eigen::Index points) {
  if (!out) return;
  out->resize(static_cast<Eigen::Index>(parts.size()), points);
  for (std::size_t i = 0; i < parts.size(); ++i) out->row(static_cast<Eigen::Index>(i)) = parts[i].value();
}

}  // namespace

void eval_batch(const SemiExplicitDAE& dae, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Z,
                Eigen::MatrixXd* F, Eigen::MatrixXd* G) {
  Tape tape;
  const Recorded r = record(tape, dae, Y, Z, false);
  gather(r.f, F, Y.cols());
  gather(r.g, G, Y.cols());
}

Eigen::VectorXd eval_f(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  Eigen::MatrixXd F;
  eval_batch(dae, y, z, &F, nullptr);
  return F.col(0);
}

Eigen::VectorXd eval_g(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  Eigen::MatrixXd G;
  eval_batch(dae, y, z, nullptr, &G);
  return G.col(0);
}

std::vector<Jacobians> jacobians_batch(const SemiExplicitDAE& dae, const Eigen::MatrixXd& Y,
                                       const Eigen::MatrixXd& Z, Eigen::MatrixXd* F, Eigen::MatrixXd* G) {
  Tape tape;
  const Recorded r = record(tape, dae, Y, Z, true);
  const Eigen::Index P = Y.cols();
  gather(r.f, F, P);
  gather(r.g, G, P);
  std::vector<Jacobians> out(static_cast<std::size_t>(P));
  for (auto& J : out) {
    J.fy.setZero(dae.n, dae.n);
    J.fz.setZero(dae.n, dae.m);
    J.gy.setZero(dae.m, dae.n);
    J.gz.setZero(dae.m, dae.m);
  }
  auto sweep = [&](const Var& component, int row, bool is_f) {
    tape.backward(ad::sum(component));
    auto take = [&](const std::vector<Var>& inputs, bool wrt_y) {
      for (std::size_t c = 0; c < inputs.size(); ++c) {
        const Tensor* gptr = tape.grad_ptr(inputs[c]);
        if (!gptr) continue;
        for (Eigen::Index p = 0; p < P; ++p) {
          Jacobians& J = out[static_cast<std::size_t>(p)];
          Eigen::MatrixXd& dst = is_f ? (wrt_y ? J.fy : J.fz) : (wrt_y ? J.gy : J.gz);
          dst(row, static_cast<Eigen::Index>(c)) = (*gptr)(0, p);
        }
      }
    };
    take(r.y, true);
    take(r.z, false);
  };
  for (int i = 0; i < dae.n; ++i) sweep(r.f[static_cast<std::size_t>(i)], i, true);
  for (int i = 0; i < dae.m; ++i) sweep(r.g[static_cast<std::size_t>(i)], i, false);
  return out;
}

Jacobians jacobians(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  return jacobians_batch(dae, y, z, nullptr, nullptr).front();
}

double index1_margin(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  const Jacobians J = jacobians(dae, y, z);
  if (dae.m == 0) return INFINITY;
  return J.gz.jacobiSvd().singularValues().minCoeff();
}

Eigen::VectorXd consistent_z(const SemiExplicitDAE& dae, const Eigen::VectorXd& y, const Eigen::VectorXd& z_guess,
                             double tol, int max_iter) {
  if (z_guess.size() != dae.m) throw InvalidArgument("z_guess must have m entries");
  Eigen::VectorXd z = z_guess;
  Eigen::MatrixXd G;
  auto residual_at = [&](const Eigen::VectorXd& zz, Eigen::VectorXd* gout) {
    Eigen::MatrixXd Gm;
    eval_batch(dae, y, zz, nullptr, &Gm);
    if (gout) *gout = Gm.col(0);
    const double r = Gm.cwiseAbs().maxCoeff();
    return std::isfinite(r) ? r : INFINITY;
  };
  Eigen::VectorXd g;
  double r = residual_at(z, &g);
  for (int it = 0; it <= max_iter; ++it) {
    if (r <= tol) return z;
    if (it == max_iter) break;
    const Jacobians J = jacobians(dae, y, z);
    const Eigen::VectorXd sv = J.gz.jacobiSvd().singularValues();
    if (!(sv.minCoeff() > 1e-13 * std::max(1.0, sv.maxCoeff()))) {
      throw IndexViolation(dae.name + ": dg/dz is singular (smallest singular value " +
                           std::to_string(sv.minCoeff()) + ")");
    }
    const Eigen::VectorXd dz = J.gz.partialPivLu().solve(-g);
    double lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= 20; ++halving, lambda *= 0.5) {
      const Eigen::VectorXd trial = z + lambda * dz;
      Eigen::VectorXd gt;
      double rt = INFINITY;
      try {
        rt = residual_at(trial, &gt);
      } catch (const DivisionByZero&) {
        continue;
      }
      if (rt < r) {
        z = trial;
        g = gt;
        r = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw NumericalFailure(dae.name + ": Newton for the algebraic state stalled", r);
    }
  }
  throw NumericalFailure(dae.name + ": Newton for the algebraic state did not converge in " +
                             std::to_string(max_iter) + " iterations",
                         r);
}

Eigen::VectorXd DescriptorReduction::to_semi_explicit(const Eigen::VectorXd& u) const { return T * u; }

Eigen::VectorXd DescriptorReduction::to_descriptor(const Eigen::VectorXd& yz) const {
  return T.partialPivLu().solve(yz);
}

namespace {

/// sum_k c_k v_k; zero coefficients are skipped.
Var combine(const Eigen::RowVectorXd& coeffs, std::span<const Var> vars) {
  Var acc;
  for (Eigen::Index k = 0; k < coeffs.size(); ++k) {
    const double c = coeffs(k);
    if (c == 0.0) continue;
    const Var term = c == 1.0 ? vars[static_cast<std::size_t>(k)] : ad::scale(vars[static_cast<std::size_t>(k)], c);
    acc = acc.valid() ? acc + term : term;
  }
  return acc.valid() ? acc : ad::scale(vars[0], 0.0);
}

}  // namespace

DescriptorReduction descriptor_to_semi_explicit(const Eigen::MatrixXd& M, DescriptorRhs phi, double rank_tol) {
  const Eigen::Index N = M.rows();
  if (N == 0 || M.cols() != N) throw InvalidArgument("descriptor matrix must be square and nonempty");
  const double norm = M.cwiseAbs().maxCoeff();
  if (norm == 0.0) throw InvalidArgument("descriptor matrix is zero: purely algebraic system");

  // Gaussian elimination with total pivoting: P M Q = L U.
  Eigen::MatrixXd U = M;
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(N, N);
  Eigen::VectorXi rowp = Eigen::VectorXi::LinSpaced(N, 0, static_cast<int>(N) - 1);
  Eigen::VectorXi colp = rowp;
  std::vector<double> pivots;
  for (Eigen::Index k = 0; k < N; ++k) {
    Eigen::Index pr = k, pc = k;
    const double piv = U.bottomRightCorner(N - k, N - k).cwiseAbs().maxCoeff(&pr, &pc);
    pr += k;
    pc += k;
    pivots.push_back(piv);
    if (piv <= rank_tol * norm) break;
    U.row(k).swap(U.row(pr));
    L.row(k).head(k).swap(L.row(pr).head(k));
    std::swap(rowp(k), rowp(pr));
    U.col(k).swap(U.col(pc));
    std::swap(colp(k), colp(pc));
    for (Eigen::Index i = k + 1; i < N; ++i) {
      const double l = U(i, k) / U(k, k);
      L(i, k) = l;
      U.row(i).tail(N - k) -= l * U.row(k).tail(N - k);
      U(i, k) = 0.0;
    }
  }
  int rank = 0;
  for (double p : pivots) {
    if (p > rank_tol * norm) ++rank;
  }
  // A pivot close to the threshold on either side makes the rank a matter of
  // roundoff; refuse rather than guess.
  for (double p : pivots) {
    if (p > 1e-3 * rank_tol * norm && p < 1e3 * rank_tol * norm) {
      throw AmbiguousRank("descriptor matrix rank is ambiguous: pivot " + std::to_string(p / norm) +
                          " relative to ||M|| is within three decades of tolerance");
    }
  }
  if (rank == N) throw NotADae("descriptor matrix is invertible: this is an ODE, use an ODE solver");

  Eigen::MatrixXd Pm = Eigen::MatrixXd::Zero(N, N);
  Eigen::MatrixXd Qm = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    Pm(i, rowp(i)) = 1.0;   // (P M)(i, :) = M(rowp(i), :)
    Qm(colp(i), i) = 1.0;   // (M Q)(:, i) = M(:, colp(i))
  }
  Eigen::MatrixXd Tcanon = Eigen::MatrixXd::Identity(N, N);
  Tcanon.topRows(rank) = U.topRows(rank);

  DescriptorReduction red;
  red.rank = rank;
  red.S = Pm.transpose() * L;
  red.T = Tcanon * Qm.transpose();
  const Eigen::MatrixXd Sinv = red.S.inverse();
  const Eigen::MatrixXd Tinv = red.T.inverse();

  const int n = rank;
  const int m = static_cast<int>(N) - rank;
  red.dae.name = "descriptor";
  red.dae.n = n;
  red.dae.m = m;
  for (int i = 0; i < n; ++i) red.dae.y_names.push_back("y" + std::to_string(i + 1));
  for (int i = 0; i < m; ++i) red.dae.z_names.push_back("z" + std::to_string(i + 1));

  // Both f and g need the full transformed phi; each call records it once.
  auto transformed = [Sinv, Tinv, phi](Tape& tape, std::span<const Var> y, std::span<const Var> z) {
    std::vector<Var> yz(y.begin(), y.end());
    yz.insert(yz.end(), z.begin(), z.end());
    std::vector<Var> u;
    for (Eigen::Index i = 0; i < Tinv.rows(); ++i) u.push_back(combine(Tinv.row(i), yz));
    const std::vector<Var> ph = phi(tape, u);
    if (static_cast<Eigen::Index>(ph.size()) != Sinv.rows()) {
      throw InvalidArgument("descriptor right-hand side returned the wrong number of components");
    }
    std::vector<Var> out;
    for (Eigen::Index i = 0; i < Sinv.rows(); ++i) out.push_back(combine(Sinv.row(i), ph));
    return out;
  };
  red.dae.f = [transformed, n](Tape& tape, std::span<const Var> y, std::span<const Var> z) {
    auto all = transformed(tape, y, z);
    return std::vector<Var>(all.begin(), all.begin() + n);
  };
  red.dae.g = [transformed, n](Tape& tape, std::span<const Var> y, std::span<const Var> z) {
    auto all = transformed(tape, y, z);
    return std::vector<Var>(all.begin() + n, all.end());
  };
  return red;
}

}  // namespace daepinn
