#include "daepinn/reference_solver.hpp"

#include <sstream>

#include "daepinn/text_io.hpp"

namespace daepinn {

void DaePointModel::evaluate(const std::vector<Vec<double>>& ys, const std::vector<Vec<double>>& zs,
                             std::vector<Vec<double>>* f, std::vector<Vec<double>>* g,
                             std::vector<PointJacobian<double>>* jac) const {
  const auto P = static_cast<Eigen::Index>(ys.size());
  Eigen::MatrixXd Y(dae_.n, P), Z(dae_.m, P);
  for (Eigen::Index p = 0; p < P; ++p) {
    for (int c = 0; c < dae_.n; ++c) Y(c, p) = ys[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)];
    for (int c = 0; c < dae_.m; ++c) Z(c, p) = zs[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)];
  }
  Eigen::MatrixXd F, G;
  std::vector<Jacobians> J;
  if (jac) {
    J = jacobians_batch(dae_, Y, Z, &F, &G);
  } else {
    eval_batch(dae_, Y, Z, &F, &G);
  }
  auto unpack = [P](const Eigen::MatrixXd& M, std::vector<Vec<double>>* out) {
    if (!out) return;
    out->assign(static_cast<std::size_t>(P), Vec<double>(static_cast<std::size_t>(M.rows())));
    for (Eigen::Index p = 0; p < P; ++p) {
      for (Eigen::Index c = 0; c < M.rows(); ++c) (*out)[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] = M(c, p);
    }
  };
  unpack(F, f);
  unpack(G, g);
  if (jac) {
    auto flat = [](const Eigen::MatrixXd& M) {
      Vec<double> v(static_cast<std::size_t>(M.size()));
      for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) v[static_cast<std::size_t>(r * M.cols() + c)] = M(r, c);
      }
      return v;
    };
    jac->clear();
    for (const Jacobians& j : J) jac->push_back({flat(j.fy), flat(j.fz), flat(j.gy), flat(j.gz)});
  }
}

Vec<double> DaePointModel::consistent_z(const Vec<double>& y, const Vec<double>& guess, const double& tol) const {
  const Eigen::VectorXd z = daepinn::consistent_z(
      dae_, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())),
      Eigen::Map<const Eigen::VectorXd>(guess.data(), static_cast<Eigen::Index>(guess.size())), tol);
  return Vec<double>(z.data(), z.data() + z.size());
}

namespace {

Vec<double> to_vec(const Eigen::VectorXd& v) { return Vec<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_eigen(const Vec<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_config(const SolverConfig& cfg) {
  if (!(cfg.h_ref > 0.0)) throw InvalidArgument("solver step h_ref must be positive");
  if (!(cfg.newton_tol > 0.0) || cfg.newton_max_iter < 1) {
    throw InvalidArgument("solver Newton tolerance and iteration cap must be positive");
  }
}

}  // namespace

IrkStep irk_step(const SemiExplicitDAE& dae, const Eigen::VectorXd& y_n, const Eigen::VectorXd& z_n,
                 const SolverConfig& cfg, double h, double t_n) {
  check_config(cfg);
  if (h == 0.0) h = cfg.h_ref;
  if (y_n.size() != dae.n || z_n.size() != dae.m) throw InvalidArgument("irk_step: state has wrong dimension");
  const DaePointModel model(dae);
  const TableauT<double> tab = to_generic(cfg.tableau);
  const auto r = irk_step_generic(model, tab, to_vec(y_n), to_vec(z_n), h, cfg.newton_tol, cfg.newton_max_iter, t_n);
  IrkStep out;
  out.y1 = to_eigen(r.y1);
  out.z1 = to_eigen(r.z1);
  out.xi.resize(tab.nu, dae.n);
  out.zeta.resize(tab.nu, dae.m);
  for (int j = 0; j < tab.nu; ++j) {
    out.xi.row(j) = to_eigen(r.xi[static_cast<std::size_t>(j)]).transpose();
    out.zeta.row(j) = to_eigen(r.zeta[static_cast<std::size_t>(j)]).transpose();
  }
  out.iterations = r.iterations;
  out.residual = r.residual;
  return out;
}

Trajectory solve(const SemiExplicitDAE& dae, const Eigen::VectorXd& y0, const Eigen::VectorXd& z_guess,
                 double t_end, const SolverConfig& cfg) {
  check_config(cfg);
  if (!(t_end > 0.0)) throw InvalidArgument("solve: t_end must be positive");
  Eigen::VectorXd z0;
  try {
    z0 = consistent_z(dae, y0, z_guess, cfg.newton_tol);
  } catch (const NumericalFailure& e) {
    throw StepFailure(std::string("initialization: ") + e.what(), e.last_residual(), 0.0);
  }
  const long steps = std::max(1L, static_cast<long>(std::ceil(t_end / cfg.h_ref - 1e-9)));
  Trajectory traj;
  traj.times.reserve(static_cast<std::size_t>(steps + 1));
  traj.Y.resize(steps + 1, dae.n);
  traj.Z.resize(steps + 1, dae.m);
  traj.Ydot.resize(steps + 1, dae.n);
  Eigen::VectorXd y = y0;
  Eigen::VectorXd z = z0;
  double t = 0.0;
  auto record = [&](long row) {
    traj.times.push_back(t);
    traj.Y.row(row) = y.transpose();
    traj.Z.row(row) = z.transpose();
    traj.Ydot.row(row) = eval_f(dae, y, z).transpose();
  };
  record(0);
  for (long k = 0; k < steps; ++k) {
    const double t_next = k + 1 == steps ? t_end : static_cast<double>(k + 1) * cfg.h_ref;
    const IrkStep s = irk_step(dae, y, z, cfg, t_next - t, t);
    y = s.y1;
    z = s.z1;
    t = t_next;
    record(k + 1);
  }
  traj.meta["model"] = dae.name;
  traj.meta["scheme"] = to_string(cfg.tableau.scheme);
  traj.meta["nu"] = std::to_string(cfg.tableau.nu);
  traj.meta["h_ref"] = fmt17(cfg.h_ref);
  traj.meta["newton_tol"] = fmt17(cfg.newton_tol);
  traj.meta["z_guess"] = join17(to_vec(z_guess), ',');
  traj.meta["branch_z0"] = join17(to_vec(z0), ',');
  return traj;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> dense_eval(const Trajectory& traj, double t) {
  if (traj.times.empty()) throw OutOfRange("dense_eval on an empty trajectory");
  const double t0 = traj.times.front();
  const double t1 = traj.times.back();
  if (!(t >= t0 && t <= t1)) {
    throw OutOfRange("dense_eval: t=" + fmt17(t) + " outside [" + fmt17(t0) + ", " + fmt17(t1) + "]");
  }
  const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t);
  auto k = static_cast<Eigen::Index>(it - traj.times.begin());
  if (*it == t) return {traj.Y.row(k).transpose(), traj.Z.row(k).transpose()};
  const Eigen::Index k0 = k - 1;
  const double ta = traj.times[static_cast<std::size_t>(k0)];
  const double tb = traj.times[static_cast<std::size_t>(k)];
  const double dt = tb - ta;
  const double s = (t - ta) / dt;
  const Eigen::VectorXd ya = traj.Y.row(k0).transpose();
  const Eigen::VectorXd yb = traj.Y.row(k).transpose();
  Eigen::VectorXd y;
  if (traj.Ydot.rows() == traj.Y.rows()) {
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    y = h00 * ya + h10 * dt * traj.Ydot.row(k0).transpose() + h01 * yb + h11 * dt * traj.Ydot.row(k).transpose();
  } else {
    y = (1 - s) * ya + s * yb;
  }
  const Eigen::VectorXd z = (1 - s) * traj.Z.row(k0).transpose() + s * traj.Z.row(k).transpose();
  return {y, z};
}

std::string trajectory_csv(const Trajectory& traj, const std::vector<std::string>& y_names,
                           const std::vector<std::string>& z_names) {
  std::ostringstream out;
  out << "t";
  for (const auto& n : y_names) out << "," << n;
  for (const auto& n : z_names) out << "," << n;
  out << "\n";
  for (std::size_t r = 0; r < traj.times.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    out << fmt17(traj.times[r]);
    for (Eigen::Index c = 0; c < traj.Y.cols(); ++c) out << "," << fmt17(traj.Y(row, c));
    for (Eigen::Index c = 0; c < traj.Z.cols(); ++c) out << "," << fmt17(traj.Z(row, c));
    out << "\n";
  }
  return out.str();
}

}  // namespace daepinn
