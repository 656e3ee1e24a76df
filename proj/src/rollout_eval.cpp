#include "daepinn/rollout_eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "daepinn/errors.hpp"
#include "daepinn/text_io.hpp"

namespace daepinn {

StagePrediction OracleStageModel::predict(const Tensor& y_n) const {
  const int nu = cfg_.tableau.nu, slots = nu + 1;
  const auto B = static_cast<int>(y_n.rows());
  StagePrediction out{{B, slots, dae_.n, Tensor(B, dae_.n * slots)}, {B, slots, dae_.m, Tensor(B, dae_.m * slots)}};
  for (int b = 0; b < B; ++b) {
    const Eigen::VectorXd y = y_n.row(b).transpose();
    const Eigen::VectorXd z = consistent_z(dae_, y, z_guess_, cfg_.newton_tol);
    const IrkStep st = irk_step(dae_, y, z, cfg_, h_);
    for (int s = 0; s < dae_.n; ++s) {
      for (int j = 0; j < nu; ++j) out.Y.at(b, j, s) = st.xi(j, s);
      out.Y.at(b, nu, s) = st.y1(s);
    }
    for (int r = 0; r < dae_.m; ++r) {
      for (int j = 0; j < nu; ++j) out.Z.at(b, j, r) = st.zeta(j, r);
      out.Z.at(b, nu, r) = st.z1(r);
    }
  }
  return out;
}

std::vector<std::string> state_names(const SemiExplicitDAE& dae) {
  std::vector<std::string> names = dae.y_names;
  names.insert(names.end(), dae.z_names.begin(), dae.z_names.end());
  return names;
}

RolloutResult simulate(const StageModel& model, const SemiExplicitDAE& dae, const Eigen::VectorXd& y0, int N) {
  if (N < 1) throw InvalidArgument("simulate: N must be >= 1");
  if (y0.size() != model.n()) throw InvalidArgument("simulate: y0 has wrong dimension");
  if (!y0.allFinite()) throw InvalidArgument("simulate: y0 is not finite");
  if (dae.n != model.n() || dae.m != model.m()) throw InvalidArgument("simulate: model and DAE dimensions differ");
  const ButcherTableau& tab = model.tableau();
  const int nu = tab.nu, slots = nu + 1;
  const double h = model.h();
  RolloutResult res;
  res.N = N;
  Trajectory& tr = res.trajectory;
  const auto rows = static_cast<Eigen::Index>(N) * slots;
  tr.times.reserve(static_cast<std::size_t>(rows));
  tr.Y.resize(rows, model.n());
  tr.Z.resize(rows, model.m());
  Tensor y(1, model.n());
  y.row(0) = y0.transpose();
  for (int k = 0; k < N; ++k) {
    const StagePrediction p = model.predict(y);
    if (!p.Y.data.allFinite() || !p.Z.data.allFinite()) {
      throw RolloutDivergence("non-finite prediction at step " + std::to_string(k + 1), k + 1);
    }
    const double t_n = static_cast<double>(k) * h;
    for (int j = 0; j < slots; ++j) {
      const Eigen::Index r = static_cast<Eigen::Index>(k) * slots + j;
      tr.times.push_back(j < nu ? t_n + tab.c(j) * h : static_cast<double>(k + 1) * h);
      for (int s = 0; s < model.n(); ++s) tr.Y(r, s) = p.Y.at(0, j, s);
      for (int s = 0; s < model.m(); ++s) tr.Z(r, s) = p.Z.at(0, j, s);
    }
    double ginf = 0.0;
    try {
      ginf = algebraic_residuals(p.Y, p.Z, nu, dae).data.cwiseAbs().maxCoeff();
    } catch (const DivisionByZero&) {
      ginf = INFINITY;
    }
    res.drift.push_back(ginf);
    for (int s = 0; s < model.n(); ++s) y(0, s) = p.Y.at(0, nu, s);
  }
  tr.meta["steps"] = std::to_string(N);
  tr.meta["h"] = fmt17(h);
  tr.meta["scheme"] = to_string(tab.scheme);
  tr.meta["nu"] = std::to_string(nu);
  tr.meta["max_drift"] = fmt17(*std::max_element(res.drift.begin(), res.drift.end()));
  return res;
}

Eigen::VectorXd l2_relative_error(const Trajectory& pred, const Trajectory& truth, std::size_t rows,
                                  const std::vector<std::string>& names) {
  if (rows == 0 || rows > pred.times.size()) throw InvalidArgument("l2_relative_error: bad sample count");
  const Eigen::Index n = pred.Y.cols(), m = pred.Z.cols();
  if (truth.Y.cols() != n || truth.Z.cols() != m) throw InvalidArgument("l2_relative_error: state dimensions differ");
  Eigen::VectorXd num = Eigen::VectorXd::Zero(n + m), den = Eigen::VectorXd::Zero(n + m);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto [ty, tz] = dense_eval(truth, pred.times[i]);
    for (Eigen::Index s = 0; s < n; ++s) {
      num(s) += (pred.Y(r, s) - ty(s)) * (pred.Y(r, s) - ty(s));
      den(s) += ty(s) * ty(s);
    }
    for (Eigen::Index s = 0; s < m; ++s) {
      num(n + s) += (pred.Z(r, s) - tz(s)) * (pred.Z(r, s) - tz(s));
      den(n + s) += tz(s) * tz(s);
    }
  }
  for (Eigen::Index s = 0; s < n + m; ++s) {
    if (den(s) == 0.0) {
      const std::string name =
          static_cast<std::size_t>(s) < names.size() ? names[static_cast<std::size_t>(s)] : "#" + std::to_string(s);
      throw DegenerateDenominator("true trajectory of state " + name + " is identically zero");
    }
  }
  return (num.array() / den.array()).sqrt().matrix();
}

Eigen::VectorXd l2_relative_error(const Trajectory& pred, const Trajectory& truth,
                                  const std::vector<std::string>& names) {
  return l2_relative_error(pred, truth, pred.times.size(), names);
}

EnsembleReport evaluate_ensemble(const StageModel& model, const SemiExplicitDAE& dae, const Tensor& ics, int N,
                                 const SolverConfig& oracle, const Eigen::VectorXd& z_guess) {
  if (ics.rows() < 1) throw InvalidArgument("evaluate_ensemble: no initial conditions");
  const std::vector<std::string> names = state_names(dae);
  EnsembleReport rep;
  std::vector<Eigen::VectorXd> rows;
  for (Eigen::Index i = 0; i < ics.rows(); ++i) {
    const Eigen::VectorXd y0 = ics.row(i).transpose();
    try {
      const RolloutResult r = simulate(model, dae, y0, N);
      const Trajectory truth = solve(dae, y0, z_guess, static_cast<double>(N) * model.h(), oracle);
      const Eigen::VectorXd e = l2_relative_error(r.trajectory, truth, names);
      if (!e.allFinite()) throw RolloutDivergence("non-finite error", N);
      rows.push_back(e);
      rep.ok_index.push_back(static_cast<int>(i));
      rep.max_drift = std::max(rep.max_drift, *std::max_element(r.drift.begin(), r.drift.end()));
    } catch (const Error& e) {
      rep.failures.push_back({static_cast<int>(i), e.what()});
    }
  }
  const auto S = static_cast<Eigen::Index>(names.size());
  rep.errors.resize(static_cast<Eigen::Index>(rows.size()), S);
  for (std::size_t r = 0; r < rows.size(); ++r) rep.errors.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  if (rows.empty()) {
    rep.mean = Eigen::VectorXd::Constant(S, NAN);
    rep.std = Eigen::VectorXd::Constant(S, NAN);
  } else {
    rep.mean = rep.errors.colwise().mean().transpose();
    const Eigen::MatrixXd centered = rep.errors.rowwise() - rep.mean.transpose();
    rep.std = (centered.cwiseAbs2().colwise().sum().transpose() / static_cast<double>(rows.size())).cwiseSqrt();
  }
  return rep;
}

std::vector<SchemeCurve> compare_schemes(const std::vector<std::pair<std::string, const StageModel*>>& models,
                                         const SemiExplicitDAE& dae, const Eigen::VectorXd& y0, int N,
                                         const SolverConfig& oracle, const Eigen::VectorXd& z_guess) {
  if (models.empty()) throw InvalidArgument("compare_schemes: no models");
  const double h = models.front().second->h();
  for (const auto& [label, model] : models) {
    if (model->h() != h) throw InvalidArgument("compare_schemes: " + label + " uses a different h");
  }
  const std::vector<std::string> names = state_names(dae);
  const Trajectory truth = solve(dae, y0, z_guess, static_cast<double>(N) * h, oracle);
  std::vector<SchemeCurve> out;
  for (const auto& [label, model] : models) {
    const RolloutResult r = simulate(*model, dae, y0, N);
    const auto slots = static_cast<std::size_t>(model->tableau().nu + 1);
    SchemeCurve c{label, Eigen::MatrixXd(N, static_cast<Eigen::Index>(names.size()))};
    for (int k = 1; k <= N; ++k) {
      c.errors.row(k - 1) = l2_relative_error(r.trajectory, truth, static_cast<std::size_t>(k) * slots, names).transpose();
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string errors_csv(const Eigen::VectorXd& errors, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "state,l2rel\n";
  for (Eigen::Index s = 0; s < errors.size(); ++s) out << names[static_cast<std::size_t>(s)] << "," << fmt17(errors(s)) << "\n";
  return out.str();
}

std::string drift_csv(const std::vector<double>& drift) {
  std::ostringstream out;
  out << "step,ginf\n";
  for (std::size_t k = 0; k < drift.size(); ++k) out << k + 1 << "," << fmt17(drift[k]) << "\n";
  return out.str();
}

std::string ensemble_csv(const EnsembleReport& r, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "statistic";
  for (const auto& n : names) out << "," << n;
  out << "\nmean";
  for (Eigen::Index s = 0; s < r.mean.size(); ++s) out << "," << fmt17(r.mean(s));
  out << "\nstd";
  for (Eigen::Index s = 0; s < r.std.size(); ++s) out << "," << fmt17(r.std(s));
  out << "\n# ok=" << r.ok_index.size() << " failed=" << r.failures.size() << "\n";
  return out.str();
}

std::string curves_csv(const std::vector<SchemeCurve>& curves, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "scheme,steps";
  for (const auto& n : names) out << "," << n;
  out << "\n";
  for (const SchemeCurve& c : curves) {
    for (Eigen::Index k = 0; k < c.errors.rows(); ++k) {
      out << c.label << "," << k + 1;
      for (Eigen::Index s = 0; s < c.errors.cols(); ++s) out << "," << fmt17(c.errors(k, s));
      out << "\n";
    }
  }
  return out.str();
}

std::string svg_plot(const std::string& title, const std::vector<PlotSeries>& series) {
  constexpr double W = 640, H = 360, L = 60, R = 20, T = 30, Bm = 40;
  double t0 = INFINITY, t1 = -INFINITY, v0 = INFINITY, v1 = -INFINITY;
  for (const PlotSeries& s : series) {
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      if (!std::isfinite(s.v[i])) continue;
      t0 = std::min(t0, s.t[i]);
      t1 = std::max(t1, s.t[i]);
      v0 = std::min(v0, s.v[i]);
      v1 = std::max(v1, s.v[i]);
    }
  }
  if (!(t1 > t0)) t1 = t0 + 1.0;
  if (!(v1 > v0)) {
    v0 -= 0.5;
    v1 += 0.5;
  }
  auto X = [&](double t) { return L + (t - t0) / (t1 - t0) * (W - L - R); };
  auto Yp = [&](double v) { return H - Bm - (v - v0) / (v1 - v0) * (H - T - Bm); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - Bm << "\" x2=\"" << W - R << "\" y2=\"" << H - Bm << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - Bm << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << L << "\" y=\"" << H - 22 << "\" font-size=\"11\">" << fmt17(t0).substr(0, 8) << "</text>\n";
  o << "<text x=\"" << W - R << "\" y=\"" << H - 22 << "\" font-size=\"11\" text-anchor=\"end\">"
    << fmt17(t1).substr(0, 8) << "</text>\n";
  o << "<text x=\"4\" y=\"" << H - Bm << "\" font-size=\"11\">" << fmt17(v0).substr(0, 8) << "</text>\n";
  o << "<text x=\"4\" y=\"" << T + 4 << "\" font-size=\"11\">" << fmt17(v1).substr(0, 8) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const PlotSeries& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" stroke-width=\"1.5\""
      << (s.dashed ? " stroke-dasharray=\"6,3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      if (std::isfinite(s.v[i])) o << X(s.t[i]) << "," << Yp(s.v[i]) << " ";
    }
    o << "\"/>\n";
    o << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (k + 1) << "\" font-size=\"11\" text-anchor=\"end\" fill=\""
      << colors[k % 6] << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace daepinn
