#include "daepinn/pinn_loss.hpp"

#include <cmath>

#include "daepinn/errors.hpp"

namespace daepinn {

using ad::Tape;
using ad::Var;

namespace {

void require_batch(Eigen::Index rows) {
  if (rows < 1) throw InvalidArgument("loss needs a nonempty batch");
}

Var stage_block(Var X, int s, int slots, int nu) { return ad::slice_cols(X, static_cast<Eigen::Index>(s) * slots, nu); }

Var end_column(Var X, int s, int slots, int nu) {
  return ad::slice_cols(X, static_cast<Eigen::Index>(s) * slots + nu, 1);
}

}  // namespace

PhysicsResiduals physics_residuals(Tape& tape, Var Y, Var Z, int n, int m, const ButcherTableau& tableau, double h,
                                   const SemiExplicitDAE& dae) {
  if (n != dae.n || m != dae.m) throw InvalidArgument("stage predictions do not match the DAE dimensions");
  const int nu = tableau.nu;
  const int slots = nu + 1;
  if (Y.cols() != n * slots || Z.cols() != m * slots || Y.rows() != Z.rows()) {
    throw InvalidArgument("stage predictions " + ad::shape_string(Y.value()) + " and " +
                          ad::shape_string(Z.value()) + " do not match nu=" + std::to_string(nu));
  }
  require_batch(Y.rows());
  std::vector<Var> xi, zeta, y_end, z_end;
  for (int s = 0; s < n; ++s) {
    xi.push_back(stage_block(Y, s, slots, nu));
    y_end.push_back(end_column(Y, s, slots, nu));
  }
  for (int r = 0; r < m; ++r) {
    zeta.push_back(stage_block(Z, r, slots, nu));
    z_end.push_back(end_column(Z, r, slots, nu));
  }
  const std::vector<Var> F = dae.f(tape, xi, zeta);
  const std::vector<Var> G_stage = dae.g(tape, xi, zeta);
  const std::vector<Var> G_end = dae.g(tape, y_end, z_end);

  const Var At = tape.constant(Tensor(tableau.a.transpose()));
  const Var bcol = tape.constant(Tensor(tableau.b));
  PhysicsResiduals out;
  for (int s = 0; s < n; ++s) {
    const Var stage_t = xi[static_cast<std::size_t>(s)] - ad::scale(ad::matmul(F[static_cast<std::size_t>(s)], At), h);
    const Var end_t = y_end[static_cast<std::size_t>(s)] - ad::scale(ad::matmul(F[static_cast<std::size_t>(s)], bcol), h);
    const Var parts[] = {stage_t, end_t};
    out.targets.push_back(ad::concat_cols(parts));
  }
  for (int r = 0; r < m; ++r) {
    const Var parts[] = {G_stage[static_cast<std::size_t>(r)], G_end[static_cast<std::size_t>(r)]};
    out.g_values.push_back(ad::concat_cols(parts));
  }
  return out;
}

Var loss_f(Tape& tape, const Tensor& y_n, const std::vector<Var>& targets) {
  require_batch(y_n.rows());
  if (static_cast<Eigen::Index>(targets.size()) != y_n.cols()) {
    throw InvalidArgument("loss_f: one target block per state expected");
  }
  Var acc;
  Eigen::Index count = 0;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const Var& t = targets[s];
    if (t.rows() != y_n.rows()) throw InvalidArgument("loss_f: target batch does not match y_n");
    const Tensor anchor = y_n.col(static_cast<Eigen::Index>(s)).replicate(1, t.cols());
    const Var term = ad::sum(ad::square(tape.constant(anchor) - t));
    acc = acc.valid() ? acc + term : term;
    count = t.rows() * t.cols();
  }
  return ad::scale(acc, 1.0 / static_cast<double>(count));
}

Var loss_g(const std::vector<Var>& g_values) {
  if (g_values.empty()) throw InvalidArgument("loss_g: no algebraic equations");
  Var acc;
  for (const Var& g : g_values) {
    require_batch(g.rows());
    const Var term = ad::sum(ad::square(g));
    acc = acc.valid() ? acc + term : term;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(g_values.front().value().size()));
}

CompositeLoss composite_loss(const PinnAssembly& a, Var theta, const Tensor& y_n, const SemiExplicitDAE& dae,
                             double w_f, double w_g) {
  if (!(w_f > 0.0) || !(w_g > 0.0)) throw InvalidArgument("penalty weights must be positive");
  require_batch(y_n.rows());
  Tape& tape = *theta.tape();
  const StageVars st = predict_stages(a, theta, y_n);
  const PhysicsResiduals res = physics_residuals(tape, st.Y, st.Z, a.n, a.m, a.tableau, a.h, dae);
  CompositeLoss out;
  out.L_f = loss_f(tape, y_n, res.targets);
  out.L_g = loss_g(res.g_values);
  out.total = ad::scale(out.L_f, w_f) + ad::scale(out.L_g, w_g);
  return out;
}

namespace {

StageTensor from_blocks(const std::vector<Var>& blocks, int batch, int slots) {
  StageTensor t{batch, slots, static_cast<int>(blocks.size()), Tensor(batch, static_cast<Eigen::Index>(blocks.size()) * slots)};
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    t.data.middleCols(static_cast<Eigen::Index>(s) * slots, slots) = blocks[s].value();
  }
  return t;
}

}  // namespace

StageTensor dynamic_residual_targets(const StageTensor& Y, const StageTensor& Z, const ButcherTableau& tableau,
                                     double h, const SemiExplicitDAE& dae) {
  Tape tape;
  const auto res = physics_residuals(tape, tape.constant(Y.data), tape.constant(Z.data), Y.dim, Z.dim, tableau, h, dae);
  return from_blocks(res.targets, Y.batch, Y.slots);
}

double loss_f(const Tensor& y_n, const StageTensor& targets) {
  Tape tape;
  std::vector<Var> blocks;
  for (int s = 0; s < targets.dim; ++s) {
    blocks.push_back(tape.constant(Tensor(targets.data.middleCols(static_cast<Eigen::Index>(s) * targets.slots, targets.slots))));
  }
  require_batch(targets.batch);
  return loss_f(tape, y_n, blocks).scalar();
}

StageTensor algebraic_residuals(const StageTensor& Y, const StageTensor& Z, int nu, const SemiExplicitDAE& dae) {
  Tape tape;
  ButcherTableau shape;
  shape.nu = nu;
  shape.a = Eigen::MatrixXd::Zero(nu, nu);
  shape.b = Eigen::VectorXd::Zero(nu);
  shape.c = Eigen::VectorXd::Zero(nu);
  const auto res = physics_residuals(tape, tape.constant(Y.data), tape.constant(Z.data), Y.dim, Z.dim, shape, 0.0, dae);
  return from_blocks(res.g_values, Y.batch, Y.slots);
}

double loss_g(const StageTensor& Y, const StageTensor& Z, const SemiExplicitDAE& dae) {
  require_batch(Y.batch);
  const StageTensor G = algebraic_residuals(Y, Z, Y.slots - 1, dae);
  return G.data.squaredNorm() / static_cast<double>(G.batch * G.slots);
}

LossBreakdown total_loss(double L_f, double L_g, double w_f, double w_g) {
  if (!(w_f > 0.0) || !(w_g > 0.0)) throw InvalidArgument("penalty weights must be positive");
  LossBreakdown b;
  b.L_f = L_f;
  b.L_g = L_g;
  b.w_f = w_f;
  b.w_g = w_g;
  b.total = w_f * L_f + w_g * L_g;
  return b;
}

LossBreakdown evaluate_loss(const PinnAssembly& a, const Tensor& y_n, const SemiExplicitDAE& dae, double w_f,
                            double w_g) {
  Tape tape;
  const Eigen::VectorXd theta = a.flatten();
  const Var flat = tape.constant(Tensor(Eigen::Map<const Tensor>(theta.data(), 1, theta.size())));
  const CompositeLoss l = composite_loss(a, flat, y_n, dae, w_f, w_g);
  LossBreakdown b = total_loss(l.L_f.scalar(), l.L_g.scalar(), w_f, w_g);
  b.total = l.total.scalar();
  return b;
}

}  // namespace daepinn
