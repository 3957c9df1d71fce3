#pragma once

#include "dqnmesh/netdqn.hpp"

namespace dqnmesh {

/// [B A^T; A 0] [dx; beta] = -[rhs_stat; rhs_prim].
struct KktSystem {
  Matrix b;
  Matrix a;
  Vector rhs_stat;
  Vector rhs_prim;
};

struct KktSolution {
  Vector delta_x;
  Vector beta;
};

/// Schur-complement solve: factor B, form S = A B^-1 A^T, solve for beta,
/// back-substitute for dx. Throws FactorizationError naming the failing block.
KktSolution kkt_solve(const KktSystem& sys);

/// |K [dx; beta] + rhs| / (1 + |rhs|).
double kkt_relative_residual(const KktSystem& sys, const KktSolution& sol);

/// Per-agent EC-DQN iterate bundle (view).
struct EcAgentState {
  Vector x;
  Vector v;
  HessianEstimate b_est;
  Vector beta;
  Vector delta_x;
  Vector d;
  double alpha = 0.0;
  Vector last_gradient;
};

struct EcdqnState {
  Stack x;
  Stack v;
  Stack g;
  Stack beta;
  Stack delta_x;
  Stack d;
  std::vector<HessianEstimate> b;
  Vector alpha;
  std::uint64_t curvature_skips = 0;
  std::uint64_t safeguard_clamps = 0;
  double kkt_residual_max = 0.0;

  EcAgentState agent(int i) const;
};

/// Lower eigenvalue bound for B: max(eigen_floor, 1 / gamma).
double hessian_floor(const RunConfig& config);
/// Upper eigenvalue bound for B: gamma.
double hessian_ceiling(const RunConfig& config);

/// Random SPD matrix with spectrum drawn from [lo, hi].
Matrix random_spd(int dim, double lo, double hi, Rng& rng);

/// v^(0) = g(x^(0)), B^(0) random SPD with spectrum in [0.5, 2].
EcdqnState ecdqn_initialize(const SeparableProblem& problem, const Stack& x0,
                            const RunConfig& config);

/// One round: KKT solves, fused direction, primal mix, tracker mix, B update.
void ecdqn_step(SyncNetwork& network, EcdqnState& state, const SeparableProblem& problem,
                const RunConfig& config);

RunTrace ecdqn_run(const SeparableProblem& problem, const CommGraph& graph,
                   const RunConfig& config);

}  // namespace dqnmesh
