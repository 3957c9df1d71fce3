#pragma once

#include "dqnmesh/problems.hpp"
#include "dqnmesh/quasi_newton.hpp"
#include "dqnmesh/topology.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dqnmesh {

inline constexpr std::uint64_t kBytesPerScalar = 8;

/// W * rows, accumulating each output row over j ascending.
Stack mix(const MixingMatrix& w, const Stack& rows, int threads = 1);

/// Synchronous, lossless peer network with a per-agent byte ledger.
///
/// One exchange() is one neighbor broadcast of an n-vector by every agent:
/// agent i is charged 8 * n * deg(i) bytes.
class SyncNetwork {
 public:
  SyncNetwork(CommGraph graph, double epsilon = kDefaultMetropolisEpsilon);
  SyncNetwork(CommGraph graph, MixingMatrix w);

  const CommGraph& graph() const noexcept { return graph_; }
  const MixingMatrix& weights() const noexcept { return w_; }
  int n_agents() const noexcept { return graph_.n_agents(); }
  const std::vector<std::uint64_t>& sent_bytes() const noexcept { return sent_bytes_; }
  /// Traffic spent before round 0 (initial direction mixing); kept off the round ledger.
  const std::vector<std::uint64_t>& setup_bytes() const noexcept { return setup_bytes_; }
  int round() const noexcept { return round_; }

  Stack exchange(const Stack& rows, int threads = 1);
  Stack exchange_setup(const Stack& rows, int threads = 1);
  void advance_round() noexcept { ++round_; }

 private:
  void charge(std::vector<std::uint64_t>& ledger, Eigen::Index dim);

  CommGraph graph_;
  MixingMatrix w_;
  std::vector<std::uint64_t> sent_bytes_;
  std::vector<std::uint64_t> setup_bytes_;
  int round_ = 0;
};

enum class Algorithm { DqnBfgs, DqnDfp, DigingAtc, EcdqnBfgs, EcdqnDfp };

const char* to_string(Algorithm algo);
Algorithm parse_algorithm(const std::string& name);
bool is_constrained_algorithm(Algorithm algo);
QnScheme qn_scheme_of(Algorithm algo);

struct RunConfig {
  Algorithm algo = Algorithm::DqnBfgs;
  /// Common constant step size.
  double alpha = 0.1;
  /// Optional per-agent overrides; size N when given.
  std::vector<double> agent_alphas;
  /// C^(0) = c0 * I for DQN.
  double c0 = 0.1;
  double gamma = kDefaultInverseCeiling;
  double eigen_floor = kDefaultEigenFloor;
  int max_iters = 1000;
  double tol = 1e-10;
  double epsilon = kDefaultMetropolisEpsilon;
  /// EC-DQN: mix the KKT directions before the primal update.
  bool fusion = true;
  int threads = 1;
  /// Seeds x^(0) ~ N(0, I) per agent (and B^(0) for EC-DQN).
  std::uint64_t init_seed = 0;
  bool random_init = true;
  /// max RSE beyond this counts as divergence.
  double divergence_rse = 1e8;
  /// EC-DQN: back-substitute every KKT solve and record the worst residual.
  bool check_kkt = false;
  /// EC-DQN: stop as `stalled` after this many rounds with max |dx| <= 1e-14.
  int stall_rounds = 10;
};

struct RoundRecord {
  int round = 0;
  std::vector<double> rse;
  double x_consensus_err = 0.0;
  double v_consensus_err = 0.0;
  /// DQN: z; DIGing: 0; EC-DQN: fused direction d.
  double z_consensus_err = 0.0;
  double mean_grad_norm = 0.0;
  /// |mean(v) - mean(g(x))|.
  double tracking_gap = 0.0;
  double objective = 0.0;
  std::vector<std::uint64_t> bytes_sent;
  // EC-DQN only.
  std::vector<double> feasibility;
  std::vector<double> beta_norm;
};

enum class RunStatus { Converged, MaxIters, Diverged, Stalled };

const char* to_string(RunStatus status);
RunStatus parse_run_status(const std::string& name);

struct RunTrace {
  Algorithm algo = Algorithm::DqnBfgs;
  int n_agents = 0;
  int dim = 0;
  int payloads_per_round = 0;
  std::vector<int> degrees;
  double alpha = 0.0;
  RunStatus status = RunStatus::MaxIters;
  std::string message;
  double wall_time_ms = 0.0;
  std::vector<RoundRecord> records;
  /// Local iterates after the last recorded round, one row per agent.
  Stack final_x;
  /// EC-DQN multipliers after the last round, one row per agent.
  Stack final_beta;
  double kkt_residual_max = 0.0;
  std::uint64_t curvature_skips = 0;
  std::uint64_t safeguard_clamps = 0;

  bool converged() const noexcept { return status == RunStatus::Converged; }
  /// Executed rounds; records.size() - 1.
  int rounds() const noexcept { return records.empty() ? 0 : static_cast<int>(records.size()) - 1; }
  double final_max_rse() const;
  double total_bytes_mean() const;
  std::uint64_t total_bytes_max() const;
  Vector mean_x() const;
};

/// Per-agent view of the DQN iterate bundle.
struct AgentState {
  Vector x;
  Vector v;
  Vector z;
  Vector d;
  InverseHessianEstimate c;
  double alpha = 0.0;
  Vector last_gradient;
};

/// DQN iterates for all agents.
struct DqnState {
  Stack x;
  Stack v;
  Stack z;
  Stack d;
  Stack g;  // gradients at x
  std::vector<InverseHessianEstimate> c;
  Vector alpha;
  std::uint64_t curvature_skips = 0;
  std::uint64_t safeguard_clamps = 0;

  AgentState agent(int i) const;
};

/// Local gradients, one row per agent.
Stack local_gradients(const SeparableProblem& problem, const Stack& x, int threads = 1);

/// Initial iterate shared by every algorithm for a given config.
Stack initial_iterates(const SeparableProblem& problem, const RunConfig& config);

/// Vector of step sizes from the config (uniform unless overridden).
Vector step_sizes(const RunConfig& config, int n_agents);

/// v^(0) = g(x^(0)), C^(0) = c0 I, d^(0) = -C v, z^(0) = W d^(0) (setup traffic).
DqnState dqn_initialize(SyncNetwork& network, const SeparableProblem& problem, const Stack& x0,
                        const RunConfig& config);

/// v' = W (v + g(x') - g(x)); updates g in place to g(x').
Stack track_gradient(SyncNetwork& network, const SeparableProblem& problem, const Stack& v,
                     Stack& g, const Stack& new_x, int threads = 1);

/// One synchronous DQN round: x, then v, then C, then z.
void dqn_step(SyncNetwork& network, DqnState& state, const SeparableProblem& problem,
              const RunConfig& config);

RunTrace dqn_run(const SeparableProblem& problem, const CommGraph& graph, const RunConfig& config);

/// Gradient tracking baseline: x' = W (x - alpha y), y' = W (y + g(x') - g(x)).
RunTrace diging_atc_run(const SeparableProblem& problem, const CommGraph& graph,
                        const RunConfig& config);

/// Dispatches on config.algo (including the EC-DQN variants).
RunTrace run_algorithm(const SeparableProblem& problem, const CommGraph& graph,
                       const RunConfig& config);

/// (1 - lambda) / (2 lambda^3 L q), q = gamma sqrt(min(n, N)). +inf when lambda == 0.
double safe_step_size(double lambda, double smoothness, double gamma, int n, int n_agents);

/// |x - x*| / |x*|, or |x| when x* = 0.
double rse(const Vector& x, const Vector& x_star);

// Metric helpers shared with the EC-DQN loop.
double consensus_error(const Stack& rows);
Vector row_mean(const Stack& rows);

}  // namespace dqnmesh
