#include "dqnmesh/ecdqn.hpp"

#include "run_support.hpp"

#include <algorithm>
#include <cmath>

namespace dqnmesh {

namespace {

// Relative pivot size below which a Cholesky factor counts as singular.
constexpr double kPivotTolerance = 1e-13;

bool factor_degenerate(const Eigen::LLT<Matrix>& llt) {
  const Vector diag = Matrix(llt.matrixL()).diagonal();
  if (diag.size() == 0) return false;
  return !(diag.minCoeff() > kPivotTolerance * diag.maxCoeff());
}

}  // namespace

double hessian_floor(const RunConfig& config) {
  return std::max(config.eigen_floor, 1.0 / config.gamma);
}

double hessian_ceiling(const RunConfig& config) {
  return std::max(hessian_floor(config), config.gamma);
}

KktSolution kkt_solve(const KktSystem& sys) {
  const auto n = sys.b.rows();
  const auto m = sys.a.rows();
  if (sys.b.cols() != n || sys.a.cols() != n || sys.rhs_stat.size() != n || sys.rhs_prim.size() != m)
    throw InputError("kkt_solve: block dimensions are inconsistent");
  if (m > n) throw FactorizationError("kkt_solve: constraint block A has more rows than columns");

  Eigen::LLT<Matrix> b_factor(sys.b);
  if (b_factor.info() != Eigen::Success || factor_degenerate(b_factor))
    throw FactorizationError("kkt_solve: Hessian block B is not positive definite");

  const Vector b_inv_r = b_factor.solve(sys.rhs_stat);
  const Matrix b_inv_at = b_factor.solve(sys.a.transpose());
  const Matrix schur = sys.a * b_inv_at;
  Eigen::LLT<Matrix> s_factor(schur);
  if (m > 0 && (s_factor.info() != Eigen::Success || factor_degenerate(s_factor)))
    throw FactorizationError("kkt_solve: constraint block A is rank deficient");

  KktSolution sol;
  sol.beta = m > 0 ? Vector(s_factor.solve(sys.rhs_prim - sys.a * b_inv_r)) : Vector();
  sol.delta_x = -(b_inv_r + b_inv_at * sol.beta);
  return sol;
}

double kkt_relative_residual(const KktSystem& sys, const KktSolution& sol) {
  const Vector top = sys.b * sol.delta_x + sys.a.transpose() * sol.beta + sys.rhs_stat;
  const Vector bottom = sys.a * sol.delta_x + sys.rhs_prim;
  const double rhs = std::sqrt(sys.rhs_stat.squaredNorm() + sys.rhs_prim.squaredNorm());
  return std::sqrt(top.squaredNorm() + bottom.squaredNorm()) / (1.0 + rhs);
}

EcAgentState EcdqnState::agent(int i) const {
  return EcAgentState{x.row(i).transpose(),       v.row(i).transpose(), b.at(i),
                      beta.row(i).transpose(),    delta_x.row(i).transpose(),
                      d.row(i).transpose(),       alpha[i],
                      g.row(i).transpose()};
}

Matrix random_spd(int dim, double lo, double hi, Rng& rng) {
  if (!(lo > 0 && lo <= hi)) throw InputError("random_spd: need 0 < lo <= hi");
  const Matrix g = random_normal(rng, dim, dim);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  std::uniform_real_distribution<double> dist(lo, hi);
  Vector lam(dim);
  for (int k = 0; k < dim; ++k) lam[k] = dist(rng);
  Matrix out = q * lam.asDiagonal() * q.transpose();
  return 0.5 * (out + out.transpose());
}

EcdqnState ecdqn_initialize(const SeparableProblem& problem, const Stack& x0,
                            const RunConfig& config) {
  if (!problem.constraint) throw InputError("EC-DQN requires an equality constraint");
  const int n_agents = problem.n_agents();
  const int dim = problem.dim();
  const auto m = problem.constraint->rows();
  if (x0.rows() != n_agents || x0.cols() != dim) throw InputError("ecdqn_initialize: bad x0 shape");
  EcdqnState s;
  s.x = x0;
  s.g = local_gradients(problem, x0, config.threads);
  s.v = s.g;
  s.beta = Stack::Zero(n_agents, m);
  s.delta_x = Stack::Zero(n_agents, dim);
  s.d = Stack::Zero(n_agents, dim);
  s.alpha = step_sizes(config, n_agents);
  s.b.reserve(n_agents);
  for (int i = 0; i < n_agents; ++i) {
    Rng rng(mix_seed(config.init_seed, 0xB0000ULL + static_cast<std::uint64_t>(i)));
    s.b.push_back(HessianEstimate{random_spd(dim, 0.5, 2.0, rng)});
  }
  return s;
}

void ecdqn_step(SyncNetwork& network, EcdqnState& state, const SeparableProblem& problem,
                const RunConfig& config) {
  const int n_agents = problem.n_agents();
  const auto& con = *problem.constraint;
  const QnScheme scheme = qn_scheme_of(config.algo);
  const double floor = hessian_floor(config);
  const double ceiling = hessian_ceiling(config);

  std::vector<double> kkt_res(n_agents, 0.0);
  std::vector<char> failed(n_agents, 0);
  std::vector<char> clamped(n_agents, 0);
  parallel_for(n_agents, config.threads, [&](int i) {
    const Vector xi = state.x.row(i).transpose();
    KktSystem sys{state.b[i].b, con.a, state.v.row(i).transpose(), con.residual(xi)};
    KktSolution sol;
    try {
      sol = kkt_solve(sys);
    } catch (const FactorizationError&) {
      // One retry after clamping the Hessian estimate.
      state.b[i].b = pd_safeguard(state.b[i].b, floor, ceiling);
      sys.b = state.b[i].b;
      clamped[i] = 1;
      try {
        sol = kkt_solve(sys);
      } catch (const FactorizationError&) {
        failed[i] = 1;
        return;
      }
    }
    if (config.check_kkt) kkt_res[i] = kkt_relative_residual(sys, sol);
    state.delta_x.row(i) = sol.delta_x.transpose();
    state.beta.row(i) = sol.beta.transpose();
  });
  for (int i = 0; i < n_agents; ++i) {
    if (failed[i])
      throw DivergenceError("KKT factorization failed twice for agent " + std::to_string(i));
    state.safeguard_clamps += clamped[i];
    state.kkt_residual_max = std::max(state.kkt_residual_max, kkt_res[i]);
  }

  state.d = config.fusion ? network.exchange(state.delta_x, config.threads) : state.delta_x;

  Stack payload = state.x;
  for (int i = 0; i < n_agents; ++i) payload.row(i) += state.alpha[i] * state.d.row(i);
  Stack new_x = network.exchange(payload, config.threads);

  Stack new_v = track_gradient(network, problem, state.v, state.g, new_x, config.threads);

  std::vector<char> skipped(n_agents, 0);
  std::fill(clamped.begin(), clamped.end(), 0);
  parallel_for(n_agents, config.threads, [&](int i) {
    const CurvaturePair pair{(new_x.row(i) - state.x.row(i)).transpose(),
                             (new_v.row(i) - state.v.row(i)).transpose()};
    auto updated = scheme == QnScheme::Bfgs ? bfgs_hessian_update(state.b[i], pair)
                                            : dfp_hessian_update(state.b[i], pair);
    if (!updated) {
      skipped[i] = 1;
      return;
    }
    state.b[i] = std::move(*updated);
    if (state.b[i].b.allFinite()) clamped[i] = enforce_spectrum(state.b[i].b, floor, ceiling);
  });
  for (int i = 0; i < n_agents; ++i) {
    state.curvature_skips += skipped[i];
    state.safeguard_clamps += clamped[i];
  }

  state.x = std::move(new_x);
  state.v = std::move(new_v);
  network.advance_round();
}

RunTrace ecdqn_run(const SeparableProblem& problem, const CommGraph& graph,
                   const RunConfig& config) {
  if (!is_constrained_algorithm(config.algo))
    throw InputError("ecdqn_run: algorithm must be ecdqn-bfgs or ecdqn-dfp");
  if (!problem.constraint) throw InputError("ecdqn_run: problem has no equality constraint");
  if (graph.n_agents() != problem.n_agents())
    throw InputError("ecdqn_run: graph and problem disagree on agent count");
  detail::require_reference(problem);
  detail::WallClock clock;

  SyncNetwork net(graph, config.epsilon);
  EcdqnState state = ecdqn_initialize(problem, initial_iterates(problem, config), config);
  RunTrace trace =
      detail::start_trace(config.algo, net, problem.dim(), config.fusion ? 3 : 2, config.alpha);

  auto snapshot = [&] {
    return detail::Snapshot{&state.x, &state.v, &state.d, &state.g, &state.beta};
  };
  bool done = detail::update_status(trace, detail::record_round(trace, problem, net, snapshot()), config);
  int quiet_rounds = 0;
  for (int k = 0; k < config.max_iters && !done; ++k) {
    const Stack previous = state.x;
    try {
      ecdqn_step(net, state, problem, config);
    } catch (const DivergenceError& ex) {
      trace.status = RunStatus::Diverged;
      trace.message = ex.what();
      break;
    }
    if (!state.x.allFinite() || !state.v.allFinite()) {
      trace.status = RunStatus::Diverged;
      trace.message = "non-finite iterate in round " + std::to_string(net.round());
      break;
    }
    done = detail::update_status(trace, detail::record_round(trace, problem, net, snapshot()), config);
    if (done) break;
    double max_move = 0.0;
    for (Eigen::Index i = 0; i < state.x.rows(); ++i)
      max_move = std::max(max_move, (state.x.row(i) - previous.row(i)).norm());
    quiet_rounds = max_move <= 1e-14 ? quiet_rounds + 1 : 0;
    if (config.stall_rounds > 0 && quiet_rounds >= config.stall_rounds) {
      trace.status = RunStatus::Stalled;
      trace.message = "iterates stopped moving";
      break;
    }
  }
  trace.curvature_skips = state.curvature_skips;
  trace.safeguard_clamps = state.safeguard_clamps;
  trace.kkt_residual_max = state.kkt_residual_max;
  trace.wall_time_ms = clock.elapsed_ms();
  return trace;
}

}  // namespace dqnmesh
