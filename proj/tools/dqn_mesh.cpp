// dqn-mesh: generate problems/graphs, run one algorithm, sweep grids, re-validate traces.

#include "dqnmesh/harness.hpp"
#include "dqnmesh/json_io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace dqnmesh;
namespace fs = std::filesystem;

namespace {

constexpr const char* kOutDirEnv = "DQN_MESH_OUT_DIR";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path summary_path_for(const fs::path& trace) {
  fs::path p = trace;
  return p.replace_extension(".json");
}

struct GenerateArgs {
  int agents = 10;
  int dim = 10;
  double kappa = 0.6;
  std::uint64_t seed = 0;
  std::string family = "qp";
  std::string cond = "2.1:2.6";
  double xi = 1e-2;
  bool constrained = false;
  std::string problem_out = "problem.json";
  std::string graph_out = "graph.json";
};

int cmd_generate(const GenerateArgs& a) {
  ProblemSpec spec;
  spec.family = parse_family(a.family);
  spec.n_agents = a.agents;
  spec.dim = a.dim;
  spec.cond = parse_cond_range(a.cond);
  spec.xi = a.xi;
  spec.constrained = a.constrained || spec.family == Family::BasisPursuit;
  spec.seed = a.seed;
  SeparableProblem problem = generate_problem(spec);
  attach_reference(problem);
  const CommGraph graph = random_connected_graph(a.agents, a.kappa, mix_seed(a.seed, 1));
  write_text_file(a.problem_out, problem.to_json().dump() + "\n");
  write_text_file(a.graph_out, graph.to_json().dump() + "\n");
  std::cout << "problem " << a.problem_out << " (" << to_string(spec.family) << ", N=" << a.agents
            << ", n=" << a.dim << ")\ngraph   " << a.graph_out << " (" << graph.edges().size()
            << " edges, kappa " << format_double(connectivity_ratio(graph)) << ")\n";
  return 0;
}

struct RunArgs {
  std::string algo = "dqn-bfgs";
  std::string problem;
  std::string graph;
  std::string alpha = "0.1";
  int max_iters = 1000;
  double tol = 1e-10;
  double c0 = 0.1;
  std::string trace_out;
  bool no_fusion = false;
  int threads = 1;
  std::uint64_t init_seed = 0;
};

int cmd_run(const RunArgs& a) {
  SeparableProblem problem = SeparableProblem::from_json(read_json_file(a.problem));
  if (!problem.reference_solution) attach_reference(problem);
  const CommGraph graph = CommGraph::from_json(read_json_file(a.graph));

  RunConfig rc;
  rc.algo = parse_algorithm(a.algo);
  rc.max_iters = a.max_iters;
  rc.tol = a.tol;
  rc.c0 = a.c0;
  rc.fusion = !a.no_fusion;
  rc.threads = a.threads;
  rc.init_seed = a.init_seed;

  RunTrace trace;
  if (a.alpha == "auto") {
    rc.alpha = auto_step_size(problem, graph, rc);
    trace = run_algorithm(problem, graph, rc);
  } else if (a.alpha == "golden") {
    trace = golden_section_step(problem, graph, rc).trace;
  } else {
    try {
      rc.alpha = std::stod(a.alpha);
    } catch (const std::exception&) {
      throw InputError("--alpha expects a number, 'auto' or 'golden'");
    }
    trace = run_algorithm(problem, graph, rc);
  }

  const nlohmann::json summary = trace_summary_json(trace);
  if (!a.trace_out.empty()) {
    write_text_file(a.trace_out, trace_csv(trace));
    write_text_file(summary_path_for(a.trace_out), summary.dump(2) + "\n");
  }
  nlohmann::json brief{{"converged", summary["converged"]},
                       {"rounds", summary["rounds"]},
                       {"total_bytes_per_agent_mean", summary["total_bytes_per_agent_mean"]},
                       {"wall_time_ms", summary["wall_time_ms"]},
                       {"status", summary["status"]},
                       {"alpha", summary["alpha"]},
                       {"final_max_rse", summary["final_max_rse"]}};
  std::cout << brief.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, std::string out_dir) {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) out_dir = env;
  const ExperimentConfig config = ExperimentConfig::from_json(read_json_file(config_path));
  const ExperimentResult result = run_experiment(config);
  emit_report(result.table, result.cells, out_dir);
  std::cout << format_table(result.table);
  int aborted = 0;
  for (const auto& c : result.cells) {
    if (!c.aborted) continue;
    ++aborted;
    std::cerr << "aborted: " << cell_stem(c) << ": " << c.reason << '\n';
  }
  std::cout << "wrote " << out_dir << " (" << result.cells.size() << " cells, " << aborted
            << " aborted)\n";
  return aborted > 0 ? 2 : 0;
}

int cmd_validate(const std::string& trace_path, std::string summary_path) {
  if (summary_path.empty()) summary_path = summary_path_for(trace_path).string();
  const ValidationReport rep = validate_trace(read_text(trace_path), read_json_file(summary_path));
  for (const auto& f : rep.failures) std::cerr << "FAIL " << f << '\n';
  std::cout << (rep.ok ? "ok" : "invalid") << ": " << rep.rows << " rows checked\n";
  return rep.ok ? 0 : 1;
}

int cmd_report(std::string path) {
  if (fs::is_directory(path)) path = (fs::path(path) / "summary.json").string();
  const nlohmann::json j = read_json_file(path);
  if (!j.contains("rows") && j.contains("status")) {
    // single-run summary from `run --trace-out`
    std::cout << j.value("algo", std::string("?")) << "  " << j.at("status").get<std::string>()
              << "  rounds " << j.value("rounds", 0) << "  alpha " << j.value("alpha", 0.0)
              << "  final max rse " << j.value("final_max_rse", 0.0) << "  bytes/agent "
              << j.value("total_bytes_per_agent_mean", 0.0) << '\n';
    return 0;
  }
  std::cout << format_table(SummaryTable::from_json(j));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed quasi-Newton simulator"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a problem instance and a graph");
  generate->add_option("--agents", gen.agents, "Number of agents N")->check(CLI::PositiveNumber);
  generate->add_option("--dim", gen.dim, "Decision dimension n")->check(CLI::Range(2, 100000));
  generate->add_option("--kappa", gen.kappa, "Connectivity ratio")->check(CLI::Range(0.0, 1.0));
  generate->add_option("--seed", gen.seed, "Seed");
  generate->add_option("--family", gen.family, "Problem family")
      ->check(CLI::IsMember({"qp", "logreg", "basis-pursuit"}));
  generate->add_option("--cond", gen.cond, "Condition number range lo:hi");
  generate->add_option("--xi", gen.xi, "Regularization weight");
  generate->add_flag("--constrained", gen.constrained, "Add a linear equality constraint");
  generate->add_option("--problem-out", gen.problem_out, "Problem JSON path");
  generate->add_option("--graph-out", gen.graph_out, "Graph JSON path");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one algorithm on a problem/graph pair");
  run_cmd->add_option("--algo", run.algo, "Algorithm")
      ->check(CLI::IsMember({"dqn-bfgs", "dqn-dfp", "diging-atc", "ecdqn-bfgs", "ecdqn-dfp"}));
  run_cmd->add_option("--problem", run.problem, "Problem JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--graph", run.graph, "Graph JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--alpha", run.alpha, "Step size: number, auto or golden");
  run_cmd->add_option("--max-iters", run.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
  run_cmd->add_option("--tol", run.tol, "RSE tolerance")->check(CLI::PositiveNumber);
  run_cmd->add_option("--c0", run.c0, "Initial inverse Hessian scale")->check(CLI::PositiveNumber);
  run_cmd->add_option("--trace-out", run.trace_out, "Trace CSV (summary JSON next to it)");
  run_cmd->add_flag("--no-fusion", run.no_fusion, "EC-DQN without direction mixing");
  run_cmd->add_option("--threads", run.threads, "Agents evaluated concurrently")->check(CLI::PositiveNumber);
  run_cmd->add_option("--init-seed", run.init_seed, "Seed for initial iterates");

  std::string sweep_config, sweep_out = "sweep_out";
  auto* sweep = app.add_subcommand("sweep", "Run an experiment grid");
  sweep->add_option("--config", sweep_config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, std::string("Output directory (") + kOutDirEnv + " overrides)");

  std::string validate_trace_path, validate_summary;
  auto* validate = app.add_subcommand("validate", "Re-check a trace offline");
  validate->add_option("trace", validate_trace_path, "Trace CSV")->required()->check(CLI::ExistingFile);
  validate->add_option("--summary", validate_summary, "Run summary JSON (default: next to trace)");

  std::string report_path = "sweep_out";
  auto* report = app.add_subcommand("report", "Print a summary table");
  report->add_option("path", report_path, "summary.json or sweep output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(gen);
    if (*run_cmd) return cmd_run(run);
    if (*sweep) return cmd_sweep(sweep_config, sweep_out);
    if (*validate) return cmd_validate(validate_trace_path, validate_summary);
    if (*report) return cmd_report(report_path);
  } catch (const std::exception& ex) {
    std::cerr << "dqn-mesh: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
