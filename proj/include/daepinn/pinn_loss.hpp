#pragma once

#include <vector>

#include "daepinn/dae_model.hpp"
#include "daepinn/network.hpp"

namespace daepinn {

struct LossBreakdown {
  double L_f = 0.0;
  double L_g = 0.0;
  double total = 0.0;
  double w_f = 1.0;
  double w_g = 1.0;
};

/// Per state s, targets[s] is batch x (nu+1): columns j < nu hold
/// xi_j - h sum_i a_ji f_i, column nu holds y_{n+1} - h sum_j b_j f_j.
/// g_values[r] is batch x (nu+1) with g at each stage and at the endpoint.
struct PhysicsResiduals {
  std::vector<ad::Var> targets;
  std::vector<ad::Var> g_values;
};

/// Y and Z in the state-major stage layout. f and g are evaluated once per
/// stage on whole batch x nu blocks.
PhysicsResiduals physics_residuals(ad::Tape& tape, ad::Var Y, ad::Var Z, int n, int m,
                                   const ButcherTableau& tableau, double h, const SemiExplicitDAE& dae);

/// (1 / (|T| (nu+1))) sum over points and slots of ||y_n - target||^2.
ad::Var loss_f(ad::Tape& tape, const Tensor& y_n, const std::vector<ad::Var>& targets);
/// (1 / (|T| (nu+1))) sum over points and slots of ||g||^2.
ad::Var loss_g(const std::vector<ad::Var>& g_values);

struct CompositeLoss {
  ad::Var L_f, L_g, total;
};

CompositeLoss composite_loss(const PinnAssembly& a, ad::Var theta, const Tensor& y_n,
                             const SemiExplicitDAE& dae, double w_f, double w_g);

// Value-level forms of the same computations.
StageTensor dynamic_residual_targets(const StageTensor& Y, const StageTensor& Z, const ButcherTableau& tableau,
                                     double h, const SemiExplicitDAE& dae);
double loss_f(const Tensor& y_n, const StageTensor& targets);
double loss_g(const StageTensor& Y, const StageTensor& Z, const SemiExplicitDAE& dae);
/// Stage-layout algebraic residuals, batch x (nu+1) x m.
StageTensor algebraic_residuals(const StageTensor& Y, const StageTensor& Z, int nu, const SemiExplicitDAE& dae);
LossBreakdown total_loss(double L_f, double L_g, double w_f, double w_g);
LossBreakdown evaluate_loss(const PinnAssembly& a, const Tensor& y_n, const SemiExplicitDAE& dae, double w_f,
                            double w_g);

}  // namespace daepinn
