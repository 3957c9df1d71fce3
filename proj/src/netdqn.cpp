#include "dqnmesh/netdqn.hpp"

#include "dqnmesh/ecdqn.hpp"
#include "run_support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dqnmesh {

Stack mix(const MixingMatrix& w, const Stack& rows, int threads) {
  const auto n_agents = rows.rows();
  if (w.w.rows() != n_agents || w.w.cols() != n_agents)
    throw InputError("mix: mixing matrix is " + std::to_string(w.w.rows()) + "x" +
                     std::to_string(w.w.cols()) + " but there are " + std::to_string(n_agents) +
                     " rows");
  Stack out = Stack::Zero(n_agents, rows.cols());
  parallel_for(static_cast<int>(n_agents), threads, [&](int i) {
    for (Eigen::Index j = 0; j < n_agents; ++j) {
      const double wij = w.w(i, j);
      if (wij != 0.0) out.row(i).noalias() += wij * rows.row(j);
    }
  });
  return out;
}

SyncNetwork::SyncNetwork(CommGraph graph, double epsilon)
    : SyncNetwork(graph, metropolis_weights(graph, epsilon)) {}

SyncNetwork::SyncNetwork(CommGraph graph, MixingMatrix w)
    : graph_(std::move(graph)),
      w_(std::move(w)),
      sent_bytes_(graph_.n_agents(), 0),
      setup_bytes_(graph_.n_agents(), 0) {
  if (w_.size() != graph_.n_agents()) throw InputError("SyncNetwork: W does not match the graph");
}

void SyncNetwork::charge(std::vector<std::uint64_t>& ledger, Eigen::Index dim) {
  for (int i = 0; i < graph_.n_agents(); ++i)
    ledger[i] += kBytesPerScalar * static_cast<std::uint64_t>(dim) *
                 static_cast<std::uint64_t>(graph_.degree(i));
}

Stack SyncNetwork::exchange(const Stack& rows, int threads) {
  Stack out = mix(w_, rows, threads);
  charge(sent_bytes_, rows.cols());
  return out;
}

Stack SyncNetwork::exchange_setup(const Stack& rows, int threads) {
  Stack out = mix(w_, rows, threads);
  charge(setup_bytes_, rows.cols());
  return out;
}

const char* to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::DqnBfgs: return "dqn-bfgs";
    case Algorithm::DqnDfp: return "dqn-dfp";
    case Algorithm::DigingAtc: return "diging-atc";
    case Algorithm::EcdqnBfgs: return "ecdqn-bfgs";
    case Algorithm::EcdqnDfp: return "ecdqn-dfp";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  for (auto a : {Algorithm::DqnBfgs, Algorithm::DqnDfp, Algorithm::DigingAtc, Algorithm::EcdqnBfgs,
                 Algorithm::EcdqnDfp})
    if (name == to_string(a)) return a;
  throw InputError("unknown algorithm '" + name + "'");
}

bool is_constrained_algorithm(Algorithm algo) {
  return algo == Algorithm::EcdqnBfgs || algo == Algorithm::EcdqnDfp;
}

QnScheme qn_scheme_of(Algorithm algo) {
  return (algo == Algorithm::DqnDfp || algo == Algorithm::EcdqnDfp) ? QnScheme::Dfp
                                                                     : QnScheme::Bfgs;
}

const char* to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Converged: return "converged";
    case RunStatus::MaxIters: return "max-iters";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Stalled: return "stalled";
  }
  return "?";
}

RunStatus parse_run_status(const std::string& name) {
  for (auto s : {RunStatus::Converged, RunStatus::MaxIters, RunStatus::Diverged, RunStatus::Stalled})
    if (name == to_string(s)) return s;
  throw InputError("unknown run status '" + name + "'");
}

double RunTrace::final_max_rse() const {
  if (records.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto& r = records.back().rse;
  return r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
}

double RunTrace::total_bytes_mean() const {
  if (records.empty() || records.back().bytes_sent.empty()) return 0.0;
  const auto& b = records.back().bytes_sent;
  long double total = 0;
  for (auto v : b) total += static_cast<long double>(v);
  return static_cast<double>(total / static_cast<long double>(b.size()));
}

std::uint64_t RunTrace::total_bytes_max() const {
  if (records.empty() || records.back().bytes_sent.empty()) return 0;
  const auto& b = records.back().bytes_sent;
  return *std::max_element(b.begin(), b.end());
}

Vector RunTrace::mean_x() const { return row_mean(final_x); }

AgentState DqnState::agent(int i) const {
  return AgentState{x.row(i).transpose(), v.row(i).transpose(), z.row(i).transpose(),
                    d.row(i).transpose(), c.at(i),             alpha[i],
                    g.row(i).transpose()};
}

double safe_step_size(double lambda, double smoothness, double gamma, int n, int n_agents) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw InputError("safe_step_size: lambda must be in [0, 1)");
  if (!(smoothness > 0.0)) throw InputError("safe_step_size: L must be positive");
  if (!(gamma > 0.0)) throw InputError("safe_step_size: gamma must be positive");
  if (lambda == 0.0) return std::numeric_limits<double>::infinity();
  const double q = gamma * std::sqrt(static_cast<double>(std::min(n, n_agents)));
  return (1.0 - lambda) / (2.0 * lambda * lambda * lambda * smoothness * q);
}

double rse(const Vector& x, const Vector& x_star) {
  if (x.size() != x_star.size()) throw InputError("rse: dimension mismatch");
  const double denom = x_star.norm();
  const double err = (x - x_star).norm();
  return denom > 0.0 ? err / denom : err;
}

Vector row_mean(const Stack& rows) {
  if (rows.rows() == 0) return Vector();
  Vector total = Vector::Zero(rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) total += rows.row(i).transpose();
  return total / static_cast<double>(rows.rows());
}

double consensus_error(const Stack& rows) {
  const Vector mean = row_mean(rows);
  double total = 0.0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    total += (rows.row(i).transpose() - mean).squaredNorm();
  return std::sqrt(total);
}

Stack local_gradients(const SeparableProblem& problem, const Stack& x, int threads) {
  Stack g(x.rows(), x.cols());
  parallel_for(static_cast<int>(x.rows()), threads, [&](int i) {
    g.row(i) = problem.locals[i].gradient(x.row(i).transpose()).transpose();
  });
  return g;
}

Stack initial_iterates(const SeparableProblem& problem, const RunConfig& config) {
  const int n_agents = problem.n_agents();
  const int dim = problem.dim();
  Stack x0 = Stack::Zero(n_agents, dim);
  if (!config.random_init) return x0;
  for (int i = 0; i < n_agents; ++i) {
    Rng rng(mix_seed(config.init_seed, static_cast<std::uint64_t>(i)));
    x0.row(i) = random_normal(rng, dim).transpose();
  }
  return x0;
}

Vector step_sizes(const RunConfig& config, int n_agents) {
  if (!config.agent_alphas.empty()) {
    if (static_cast<int>(config.agent_alphas.size()) != n_agents)
      throw InputError("per-agent step sizes must have one entry per agent");
    Vector a(n_agents);
    for (int i = 0; i < n_agents; ++i) {
      if (!(config.agent_alphas[i] > 0)) throw InputError("step sizes must be positive");
      a[i] = config.agent_alphas[i];
    }
    return a;
  }
  if (!(config.alpha > 0)) throw InputError("step size must be positive");
  return Vector::Constant(n_agents, config.alpha);
}

DqnState dqn_initialize(SyncNetwork& network, const SeparableProblem& problem, const Stack& x0,
                        const RunConfig& config) {
  const int n_agents = problem.n_agents();
  const int dim = problem.dim();
  if (x0.rows() != n_agents || x0.cols() != dim) throw InputError("dqn_initialize: bad x0 shape");
  if (!(config.c0 > 0)) throw InputError("dqn_initialize: c0 must be positive");
  DqnState s;
  s.x = x0;
  s.g = local_gradients(problem, x0, config.threads);
  s.v = s.g;
  s.alpha = step_sizes(config, n_agents);
  s.c.assign(n_agents, InverseHessianEstimate{config.c0 * Matrix::Identity(dim, dim), config.gamma});
  s.d.resize(n_agents, dim);
  for (int i = 0; i < n_agents; ++i) s.d.row(i) = -(s.c[i].c * s.v.row(i).transpose()).transpose();
  s.z = network.exchange_setup(s.d, config.threads);
  return s;
}

Stack track_gradient(SyncNetwork& network, const SeparableProblem& problem, const Stack& v,
                     Stack& g, const Stack& new_x, int threads) {
  Stack new_g = local_gradients(problem, new_x, threads);
  Stack payload = v + new_g - g;
  g = std::move(new_g);
  return network.exchange(payload, threads);
}

void dqn_step(SyncNetwork& network, DqnState& state, const SeparableProblem& problem,
              const RunConfig& config) {
  const int n_agents = problem.n_agents();
  const QnScheme scheme = qn_scheme_of(config.algo);

  Stack payload = state.x;
  for (int i = 0; i < n_agents; ++i) payload.row(i) += state.alpha[i] * state.z.row(i);
  Stack new_x = network.exchange(payload, config.threads);

  Stack new_v = track_gradient(network, problem, state.v, state.g, new_x, config.threads);

  std::vector<char> skipped(n_agents, 0);
  std::vector<char> clamped(n_agents, 0);
  Stack new_d(n_agents, problem.dim());
  parallel_for(n_agents, config.threads, [&](int i) {
    const CurvaturePair pair{(new_x.row(i) - state.x.row(i)).transpose(),
                             (new_v.row(i) - state.v.row(i)).transpose()};
    auto updated = scheme == QnScheme::Bfgs ? bfgs_inverse_update(state.c[i], pair)
                                            : dfp_inverse_update(state.c[i], pair);
    if (updated) {
      state.c[i] = std::move(*updated);
      if (state.c[i].c.allFinite())
        clamped[i] = enforce_spectrum(state.c[i].c, config.eigen_floor, state.c[i].gamma);
    } else {
      skipped[i] = 1;
    }
    new_d.row(i) = -(state.c[i].c * new_v.row(i).transpose()).transpose();
  });
  for (int i = 0; i < n_agents; ++i) {
    state.curvature_skips += skipped[i];
    state.safeguard_clamps += clamped[i];
  }

  state.z = network.exchange(new_d, config.threads);
  state.d = std::move(new_d);
  state.x = std::move(new_x);
  state.v = std::move(new_v);
  network.advance_round();
}

namespace detail {

const Vector& require_reference(const SeparableProblem& problem) {
  if (!problem.reference_solution)
    throw InputError("run requires a reference solution; call attach_reference first");
  return *problem.reference_solution;
}

RunTrace start_trace(Algorithm algo, const SyncNetwork& network, int dim, int payloads,
                     double alpha) {
  RunTrace t;
  t.algo = algo;
  t.n_agents = network.n_agents();
  t.dim = dim;
  t.payloads_per_round = payloads;
  t.alpha = alpha;
  for (int i = 0; i < network.n_agents(); ++i) t.degrees.push_back(network.graph().degree(i));
  return t;
}

double record_round(RunTrace& trace, const SeparableProblem& problem, const SyncNetwork& network,
                    const Snapshot& snap) {
  const Vector& x_star = require_reference(problem);
  const Stack& x = *snap.x;
  RoundRecord r;
  r.round = network.round();
  r.rse.resize(x.rows());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    r.rse[i] = rse(x.row(i).transpose(), x_star);
    worst = std::max(worst, std::isfinite(r.rse[i]) ? r.rse[i] : std::numeric_limits<double>::infinity());
  }
  r.x_consensus_err = consensus_error(x);
  r.v_consensus_err = consensus_error(*snap.v);
  r.z_consensus_err = snap.z ? consensus_error(*snap.z) : 0.0;
  const Vector g_mean = row_mean(*snap.g);
  r.mean_grad_norm = g_mean.norm();
  r.tracking_gap = (row_mean(*snap.v) - g_mean).norm();
  r.objective = problem.value(row_mean(x));
  r.bytes_sent = network.sent_bytes();
  if (problem.constraint && snap.beta) {
    r.feasibility.resize(x.rows());
    r.beta_norm.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      r.feasibility[i] = problem.constraint->residual(x.row(i).transpose()).norm();
      r.beta_norm[i] = snap.beta->row(i).norm();
    }
  }
  trace.records.push_back(std::move(r));
  trace.final_x = x;
  if (snap.beta) trace.final_beta = *snap.beta;
  return worst;
}

bool update_status(RunTrace& trace, double max_rse, const RunConfig& config) {
  if (max_rse <= config.tol) {
    trace.status = RunStatus::Converged;
    return true;
  }
  if (!(max_rse <= config.divergence_rse)) {
    trace.status = RunStatus::Diverged;
    trace.message = "max RSE exceeded divergence threshold";
    return true;
  }
  trace.status = RunStatus::MaxIters;
  return false;
}

}  // namespace detail

namespace {

bool all_finite(const Stack& a) { return a.allFinite(); }

}  // namespace

RunTrace dqn_run(const SeparableProblem& problem, const CommGraph& graph, const RunConfig& config) {
  if (config.algo != Algorithm::DqnBfgs && config.algo != Algorithm::DqnDfp)
    throw InputError("dqn_run: algorithm must be dqn-bfgs or dqn-dfp");
  if (problem.constraint) throw InputError("dqn_run: problem carries an equality constraint");
  if (graph.n_agents() != problem.n_agents())
    throw InputError("dqn_run: graph and problem disagree on agent count");
  detail::require_reference(problem);
  detail::WallClock clock;

  SyncNetwork net(graph, config.epsilon);
  DqnState state = dqn_initialize(net, problem, initial_iterates(problem, config), config);
  RunTrace trace = detail::start_trace(config.algo, net, problem.dim(), 3, config.alpha);

  auto snapshot = [&] { return detail::Snapshot{&state.x, &state.v, &state.z, &state.g, nullptr}; };
  bool done = detail::update_status(trace, detail::record_round(trace, problem, net, snapshot()), config);
  for (int k = 0; k < config.max_iters && !done; ++k) {
    try {
      dqn_step(net, state, problem, config);
    } catch (const DivergenceError& ex) {
      trace.status = RunStatus::Diverged;
      trace.message = ex.what();
      break;
    }
    if (!all_finite(state.x) || !all_finite(state.v) || !all_finite(state.z)) {
      trace.status = RunStatus::Diverged;
      trace.message = "non-finite iterate in round " + std::to_string(net.round());
      break;
    }
    done = detail::update_status(trace, detail::record_round(trace, problem, net, snapshot()), config);
  }
  trace.curvature_skips = state.curvature_skips;
  trace.safeguard_clamps = state.safeguard_clamps;
  trace.wall_time_ms = clock.elapsed_ms();
  return trace;
}

RunTrace diging_atc_run(const SeparableProblem& problem, const CommGraph& graph,
                        const RunConfig& config) {
  if (config.algo != Algorithm::DigingAtc) throw InputError("diging_atc_run: algorithm must be diging-atc");
  if (problem.constraint) throw InputError("diging_atc_run: problem carries an equality constraint");
  if (graph.n_agents() != problem.n_agents())
    throw InputError("diging_atc_run: graph and problem disagree on agent count");
  detail::require_reference(problem);
  detail::WallClock clock;

  const int n_agents = problem.n_agents();
  SyncNetwork net(graph, config.epsilon);
  const Vector alpha = step_sizes(config, n_agents);
  Stack x = initial_iterates(problem, config);
  Stack g = local_gradients(problem, x, config.threads);
  Stack y = g;
  RunTrace trace = detail::start_trace(config.algo, net, problem.dim(), 2, config.alpha);

  auto snapshot = [&] { return detail::Snapshot{&x, &y, nullptr, &g, nullptr}; };
  bool done = detail::update_status(trace, detail::record_round(trace, problem, net, snapshot()), config);
  for (int k = 0; k < config.max_iters && !done; ++k) {
    Stack payload = x;
    for (int i = 0; i < n_agents; ++i) payload.row(i) -= alpha[i] * y.row(i);
    Stack new_x = net.exchange(payload, config.threads);
    y = track_gradient(net, problem, y, g, new_x, config.threads);
    x = std::move(new_x);
    net.advance_round();
    if (!all_finite(x) || !all_finite(y)) {
      trace.status = RunStatus::Diverged;
      trace.message = "non-finite iterate in round " + std::to_string(net.round());
      break;
    }
    done = detail::update_status(trace, detail::record_round(trace, problem, net, snapshot()), config);
  }
  trace.wall_time_ms = clock.elapsed_ms();
  return trace;
}

RunTrace run_algorithm(const SeparableProblem& problem, const CommGraph& graph,
                       const RunConfig& config) {
  switch (config.algo) {
    case Algorithm::DqnBfgs:
    case Algorithm::DqnDfp: return dqn_run(problem, graph, config);
    case Algorithm::DigingAtc: return diging_atc_run(problem, graph, config);
    case Algorithm::EcdqnBfgs:
    case Algorithm::EcdqnDfp: return ecdqn_run(problem, graph, config);
  }
  throw InputError("unknown algorithm");
}

}  // namespace dqnmesh
