#pragma once

#include "dqnmesh/ecdqn.hpp"
#include "dqnmesh/netdqn.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dqnmesh {

// ---------------------------------------------------------------------------
// Step-size selection

enum class StepMode { Fixed, Auto, Golden };

const char* to_string(StepMode mode);
StepMode parse_step_mode(const std::string& name);

/// Bracket for the golden-section search, in log10(alpha).
struct StepSearch {
  double log10_lo = -3.0;
  double log10_hi = 0.3;
  int grid_points = 9;
  int golden_iters = 10;
};

/// Smoothness constant used by the constant step-size rule: the top eigenvalue
/// of the mean Hessian for quadratic families, mean local bound for logistic.
double step_size_smoothness(const SeparableProblem& problem);

/// min(cap, 0.9 * safe_step_size(lambda, L, gamma, n, N)).
double auto_step_size(const SeparableProblem& problem, const CommGraph& graph,
                      const RunConfig& config, double cap = 1.0);

struct TunedStep {
  double alpha = 0.0;
  RunTrace trace;
  int evaluations = 0;
};

/// Coarse log-grid bracketing followed by golden-section refinement of the
/// rounds-to-tolerance score. Deterministic; returns the best evaluated run.
TunedStep golden_section_step(const SeparableProblem& problem, const CommGraph& graph,
                              const RunConfig& config, const StepSearch& search = {});

/// Smaller is better: rounds when converged, penalized otherwise.
double step_score(const RunTrace& trace, const RunConfig& config);

// ---------------------------------------------------------------------------
// Trace files

inline constexpr const char* kTraceHeader =
    "round,agent,rse,x_consensus_err,v_consensus_err,mean_grad_norm,objective,bytes_sent";

std::string trace_csv(const RunTrace& trace);
nlohmann::json trace_summary_json(const RunTrace& trace);

struct ValidationReport {
  bool ok = true;
  int rows = 0;
  std::vector<std::string> failures;
};

/// Re-checks a trace offline: record shape, the byte ledger closed form,
/// monotone counters and the mean-tracking identity.
ValidationReport validate_trace(const std::string& csv_text, const nlohmann::json& summary);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  Family family = Family::Qp;
  int n_agents = 10;
  int dim = 10;
  CondRange cond{2.1, 2.6};
  double xi = 1e-2;
  bool constrained = false;
  std::vector<double> kappas{0.3, 0.6, 0.8};
  std::vector<std::uint64_t> seeds;
  std::vector<Algorithm> algos{Algorithm::DqnBfgs};
  double tol = 1e-10;
  int max_iters = 1000;
  StepMode step_mode = StepMode::Fixed;
  double alpha = 0.1;
  double c0 = 0.1;
  double epsilon = kDefaultMetropolisEpsilon;
  bool fusion = true;
  StepSearch search;
  /// Cells evaluated concurrently.
  int threads = 1;
  /// Agents evaluated concurrently inside each round.
  int round_threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);
};

/// Desk-scale default grid (N = n = 10, kappa in {0.3, 0.6, 0.8}, 20 seeds).
ExperimentConfig default_experiment();

struct SummaryRow {
  std::string algo;
  double kappa = 0.0;
  int runs = 0;
  int converged = 0;
  int aborted = 0;
  double success_rate = 0.0;
  double rounds_mean = 0.0;
  double rounds_std = 0.0;
  double bytes_mean = 0.0;  // cumulative bytes per agent, averaged over agents
  double bytes_std = 0.0;
  double bytes_max_mean = 0.0;  // busiest agent

  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;

  const SummaryRow* find(const std::string& algo, double kappa) const;
  nlohmann::json to_json() const;
  static SummaryTable from_json(const nlohmann::json& j);
  friend bool operator==(const SummaryTable&, const SummaryTable&) = default;
};

struct CellResult {
  Algorithm algo = Algorithm::DqnBfgs;
  double kappa = 0.0;
  std::uint64_t seed = 0;
  double graph_kappa = 0.0;
  bool aborted = false;
  std::string reason;
  RunTrace trace;
};

struct ExperimentResult {
  SummaryTable table;
  std::vector<CellResult> cells;

  bool any_aborted() const;
};

/// The run configuration a sweep uses for one cell (before step tuning).
RunConfig cell_run_config(const ExperimentConfig& config, Algorithm algo, std::uint64_t seed);
ProblemSpec cell_problem_spec(const ExperimentConfig& config, std::uint64_t seed);
std::uint64_t cell_graph_seed(std::uint64_t seed, std::size_t kappa_index);

/// Runs one (seed, kappa, algo) cell end to end.
CellResult run_cell(const ExperimentConfig& config, const SeparableProblem& problem,
                    const CommGraph& graph, Algorithm algo, double kappa, std::uint64_t seed);

ExperimentResult run_experiment(const ExperimentConfig& config);

/// Mean/stddev over converged runs; success rate over all runs of the cell.
SummaryTable summarize(const std::vector<CellResult>& cells);

/// Writes summary.json, traces/<run>.csv + .json, and convergence_long.csv.
void emit_report(const SummaryTable& table, const std::vector<CellResult>& cells,
                 const std::filesystem::path& out_dir);

std::string cell_stem(const CellResult& cell);

/// Plain-text rendering of a summary table.
std::string format_table(const SummaryTable& table);

}  // namespace dqnmesh
