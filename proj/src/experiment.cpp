#include "dqnmesh/harness.hpp"
#include "dqnmesh/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace dqnmesh {

namespace {

constexpr std::uint64_t kInitSalt = 0x1A17;

const std::set<std::string> kConfigKeys{
    "family", "n_agents", "dim",    "cond",    "xi",      "constrained", "kappas",
    "seeds",  "algos",    "tol",    "max_iters", "step_mode", "alpha",   "c0",
    "epsilon", "fusion",  "search", "threads", "round_threads"};

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

std::string kappa_label(double kappa) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << kappa;
  return out.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_agents < 1) throw InputError("experiment: n_agents must be >= 1");
  if (dim < 2) throw InputError("experiment: dim must be >= 2");
  if (!(cond.lo >= 1.0 && cond.lo <= cond.hi)) throw InputError("experiment: need 1 <= cond lo <= hi");
  if (!(xi >= 0.0)) throw InputError("experiment: xi must be non-negative");
  if (kappas.empty()) throw InputError("experiment: kappa list is empty");
  for (double k : kappas) {
    if (!(k > 0.0 && k <= 1.0)) throw InputError("experiment: kappa must lie in (0, 1]");
    if (n_agents > 1 && k < 2.0 / n_agents - 1e-12)
      throw InputError("experiment: kappa " + format_double(k) + " is below 2/N");
  }
  if (seeds.empty()) throw InputError("experiment: seed list is empty");
  if (algos.empty()) throw InputError("experiment: algorithm list is empty");
  for (Algorithm a : algos) {
    if (is_constrained_algorithm(a) && !constrained)
      throw InputError(std::string("experiment: ") + to_string(a) + " needs constrained problems");
    if (!is_constrained_algorithm(a) && constrained)
      throw InputError(std::string("experiment: ") + to_string(a) + " cannot handle constraints");
  }
  if (family == Family::BasisPursuit && !constrained)
    throw InputError("experiment: basis-pursuit problems are always constrained");
  if (!(tol > 0.0)) throw InputError("experiment: tol must be positive");
  if (max_iters < 1) throw InputError("experiment: max_iters must be >= 1");
  if (step_mode == StepMode::Fixed && !(alpha > 0.0)) throw InputError("experiment: alpha must be positive");
  if (!(c0 > 0.0)) throw InputError("experiment: c0 must be positive");
  if (!(epsilon > 0.0)) throw InputError("experiment: epsilon must be positive");
  if (!(search.log10_lo < search.log10_hi) || search.grid_points < 2 || search.golden_iters < 0)
    throw InputError("experiment: invalid step search bracket");
  if (threads < 1 || round_threads < 1) throw InputError("experiment: thread counts must be >= 1");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json algo_names = nlohmann::json::array();
  for (Algorithm a : algos) algo_names.push_back(to_string(a));
  return {{"family", dqnmesh::to_string(family)},
          {"n_agents", n_agents},
          {"dim", dim},
          {"cond", {cond.lo, cond.hi}},
          {"xi", xi},
          {"constrained", constrained},
          {"kappas", kappas},
          {"seeds", seeds},
          {"algos", algo_names},
          {"tol", tol},
          {"max_iters", max_iters},
          {"step_mode", dqnmesh::to_string(step_mode)},
          {"alpha", alpha},
          {"c0", c0},
          {"epsilon", epsilon},
          {"fusion", fusion},
          {"search",
           {{"log10_lo", search.log10_lo},
            {"log10_hi", search.log10_hi},
            {"grid_points", search.grid_points},
            {"golden_iters", search.golden_iters}}},
          {"threads", threads},
          {"round_threads", round_threads}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("experiment config must be a JSON object");
  for (const auto& item : j.items())
    if (!kConfigKeys.count(item.key()))
      throw InputError("experiment config: unknown key '" + item.key() + "'");
  ExperimentConfig c;
  try {
    if (j.contains("family")) c.family = parse_family(j.at("family").get<std::string>());
    c.n_agents = j.value("n_agents", c.n_agents);
    c.dim = j.value("dim", c.dim);
    if (j.contains("cond")) {
      const auto& cr = j.at("cond");
      if (cr.is_string()) {
        c.cond = parse_cond_range(cr.get<std::string>());
      } else {
        if (!cr.is_array() || cr.size() != 2) throw InputError("experiment config: cond must be [lo, hi]");
        c.cond = CondRange{cr[0].get<double>(), cr[1].get<double>()};
      }
    }
    c.xi = j.value("xi", c.xi);
    c.constrained = j.value("constrained", c.family == Family::BasisPursuit);
    if (j.contains("kappas")) c.kappas = j.at("kappas").get<std::vector<double>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("algos")) {
      c.algos.clear();
      for (const auto& a : j.at("algos")) c.algos.push_back(parse_algorithm(a.get<std::string>()));
    }
    c.tol = j.value("tol", c.tol);
    c.max_iters = j.value("max_iters", c.max_iters);
    if (j.contains("step_mode")) c.step_mode = parse_step_mode(j.at("step_mode").get<std::string>());
    c.alpha = j.value("alpha", c.alpha);
    c.c0 = j.value("c0", c.c0);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.fusion = j.value("fusion", c.fusion);
    if (j.contains("search")) {
      const auto& s = j.at("search");
      c.search.log10_lo = s.value("log10_lo", c.search.log10_lo);
      c.search.log10_hi = s.value("log10_hi", c.search.log10_hi);
      c.search.grid_points = s.value("grid_points", c.search.grid_points);
      c.search.golden_iters = s.value("golden_iters", c.search.golden_iters);
    }
    c.threads = j.value("threads", c.threads);
    c.round_threads = j.value("round_threads", c.round_threads);
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("experiment config: ") + ex.what());
  }
  c.validate();
  return c;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.to_json() == b.to_json();
}

ExperimentConfig default_experiment() {
  ExperimentConfig c;
  c.algos = {Algorithm::DqnBfgs, Algorithm::DqnDfp, Algorithm::DigingAtc};
  for (std::uint64_t s = 0; s < 20; ++s) c.seeds.push_back(s);
  return c;
}

const SummaryRow* SummaryTable::find(const std::string& algo, double kappa) const {
  for (const auto& r : rows)
    if (r.algo == algo && std::abs(r.kappa - kappa) < 1e-12) return &r;
  return nullptr;
}

nlohmann::json SummaryTable::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"algo", r.algo},
                   {"kappa", r.kappa},
                   {"runs", r.runs},
                   {"converged", r.converged},
                   {"aborted", r.aborted},
                   {"success_rate", r.success_rate},
                   {"rounds_mean", r.rounds_mean},
                   {"rounds_std", r.rounds_std},
                   {"bytes_mean", r.bytes_mean},
                   {"bytes_std", r.bytes_std},
                   {"bytes_max_mean", r.bytes_max_mean}});
  }
  return {{"rows", out}};
}

SummaryTable SummaryTable::from_json(const nlohmann::json& j) {
  SummaryTable t;
  try {
    for (const auto& r : j.at("rows")) {
      SummaryRow row;
      row.algo = r.at("algo").get<std::string>();
      row.kappa = r.at("kappa").get<double>();
      row.runs = r.at("runs").get<int>();
      row.converged = r.at("converged").get<int>();
      row.aborted = r.at("aborted").get<int>();
      row.success_rate = r.at("success_rate").get<double>();
      row.rounds_mean = r.at("rounds_mean").get<double>();
      row.rounds_std = r.at("rounds_std").get<double>();
      row.bytes_mean = r.at("bytes_mean").get<double>();
      row.bytes_std = r.at("bytes_std").get<double>();
      row.bytes_max_mean = r.at("bytes_max_mean").get<double>();
      t.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("summary table: ") + ex.what());
  }
  return t;
}

bool ExperimentResult::any_aborted() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.aborted; });
}

RunConfig cell_run_config(const ExperimentConfig& config, Algorithm algo, std::uint64_t seed) {
  RunConfig rc;
  rc.algo = algo;
  rc.alpha = config.alpha;
  rc.c0 = config.c0;
  rc.max_iters = config.max_iters;
  rc.tol = config.tol;
  rc.epsilon = config.epsilon;
  rc.fusion = config.fusion;
  rc.threads = config.round_threads;
  rc.init_seed = mix_seed(seed, kInitSalt);
  return rc;
}

ProblemSpec cell_problem_spec(const ExperimentConfig& config, std::uint64_t seed) {
  ProblemSpec spec;
  spec.family = config.family;
  spec.n_agents = config.n_agents;
  spec.dim = config.dim;
  spec.cond = config.cond;
  spec.xi = config.xi;
  spec.constrained = config.constrained;
  spec.seed = seed;
  return spec;
}

std::uint64_t cell_graph_seed(std::uint64_t seed, std::size_t kappa_index) {
  return mix_seed(seed, kappa_index + 1);
}

CellResult run_cell(const ExperimentConfig& config, const SeparableProblem& problem,
                    const CommGraph& graph, Algorithm algo, double kappa, std::uint64_t seed) {
  CellResult cell;
  cell.algo = algo;
  cell.kappa = kappa;
  cell.seed = seed;
  cell.graph_kappa = connectivity_ratio(graph);
  RunConfig rc = cell_run_config(config, algo, seed);
  try {
    switch (config.step_mode) {
      case StepMode::Fixed:
        cell.trace = run_algorithm(problem, graph, rc);
        break;
      case StepMode::Auto:
        rc.alpha = auto_step_size(problem, graph, rc);
        cell.trace = run_algorithm(problem, graph, rc);
        break;
      case StepMode::Golden:
        cell.trace = golden_section_step(problem, graph, rc, config.search).trace;
        break;
    }
  } catch (const std::exception& ex) {
    cell.aborted = true;
    cell.reason = ex.what();
  }
  return cell;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  struct Key {
    std::size_t seed_index, kappa_index, algo_index;
  };
  std::vector<Key> keys;
  for (std::size_t s = 0; s < config.seeds.size(); ++s)
    for (std::size_t k = 0; k < config.kappas.size(); ++k)
      for (std::size_t a = 0; a < config.algos.size(); ++a) keys.push_back({s, k, a});

  // Problems (with references) are shared by every cell of a seed.
  std::vector<std::optional<SeparableProblem>> problems(config.seeds.size());
  std::vector<std::string> problem_errors(config.seeds.size());
  parallel_for(static_cast<int>(config.seeds.size()), config.threads, [&](int s) {
    try {
      SeparableProblem p = generate_problem(cell_problem_spec(config, config.seeds[s]));
      attach_reference(p);
      problems[s] = std::move(p);
    } catch (const std::exception& ex) {
      problem_errors[s] = std::string("reference solve failed: ") + ex.what();
    }
  });

  ExperimentResult result;
  result.cells.resize(keys.size());
  parallel_for(static_cast<int>(keys.size()), config.threads, [&](int idx) {
    const Key& key = keys[idx];
    const std::uint64_t seed = config.seeds[key.seed_index];
    const double kappa = config.kappas[key.kappa_index];
    const Algorithm algo = config.algos[key.algo_index];
    CellResult& cell = result.cells[idx];
    if (!problems[key.seed_index]) {
      cell.algo = algo;
      cell.kappa = kappa;
      cell.seed = seed;
      cell.aborted = true;
      cell.reason = problem_errors[key.seed_index];
      return;
    }
    try {
      const CommGraph graph =
          random_connected_graph(config.n_agents, kappa, cell_graph_seed(seed, key.kappa_index));
      cell = run_cell(config, *problems[key.seed_index], graph, algo, kappa, seed);
    } catch (const std::exception& ex) {
      cell.algo = algo;
      cell.kappa = kappa;
      cell.seed = seed;
      cell.aborted = true;
      cell.reason = ex.what();
    }
  });
  result.table = summarize(result.cells);
  return result;
}

SummaryTable summarize(const std::vector<CellResult>& cells) {
  // Rows ordered by first appearance of the algorithm, then kappa.
  std::vector<std::string> algo_order;
  for (const auto& c : cells) {
    const std::string name = to_string(c.algo);
    if (std::find(algo_order.begin(), algo_order.end(), name) == algo_order.end())
      algo_order.push_back(name);
  }
  struct Acc {
    int runs = 0, converged = 0, aborted = 0;
    std::vector<double> rounds, bytes, bytes_max;
  };
  std::map<std::pair<std::size_t, double>, Acc> groups;
  for (const auto& c : cells) {
    const auto pos = static_cast<std::size_t>(
        std::find(algo_order.begin(), algo_order.end(), to_string(c.algo)) - algo_order.begin());
    Acc& acc = groups[{pos, c.kappa}];
    ++acc.runs;
    if (c.aborted) {
      ++acc.aborted;
      continue;
    }
    if (!c.trace.converged()) continue;
    ++acc.converged;
    acc.rounds.push_back(c.trace.rounds());
    acc.bytes.push_back(c.trace.total_bytes_mean());
    acc.bytes_max.push_back(static_cast<double>(c.trace.total_bytes_max()));
  }
  SummaryTable table;
  for (const auto& [key, acc] : groups) {
    SummaryRow row;
    row.algo = algo_order[key.first];
    row.kappa = key.second;
    row.runs = acc.runs;
    row.converged = acc.converged;
    row.aborted = acc.aborted;
    row.success_rate = acc.runs > 0 ? 100.0 * acc.converged / acc.runs : 0.0;
    row.rounds_mean = mean_of(acc.rounds);
    row.rounds_std = sample_std(acc.rounds, row.rounds_mean);
    row.bytes_mean = mean_of(acc.bytes);
    row.bytes_std = sample_std(acc.bytes, row.bytes_mean);
    row.bytes_max_mean = mean_of(acc.bytes_max);
    table.rows.push_back(row);
  }
  return table;
}

std::string cell_stem(const CellResult& cell) {
  return std::string(to_string(cell.algo)) + "_k" + kappa_label(cell.kappa) + "_s" +
         std::to_string(cell.seed);
}

void emit_report(const SummaryTable& table, const std::vector<CellResult>& cells,
                 const std::filesystem::path& out_dir) {
  nlohmann::json summary = table.to_json();
  nlohmann::json index = nlohmann::json::array();
  std::ostringstream long_csv;
  bool any_trace = false;
  for (const auto& c : cells) {
    nlohmann::json entry{{"algo", to_string(c.algo)},
                         {"kappa", c.kappa},
                         {"seed", c.seed},
                         {"graph_kappa", c.graph_kappa},
                         {"aborted", c.aborted}};
    if (c.aborted) {
      entry["reason"] = c.reason;
      index.push_back(entry);
      continue;
    }
    const std::string stem = cell_stem(c);
    entry["status"] = to_string(c.trace.status);
    entry["rounds"] = c.trace.rounds();
    entry["alpha"] = c.trace.alpha;
    entry["trace"] = "traces/" + stem + ".csv";
    index.push_back(entry);

    write_text_file(out_dir / "traces" / (stem + ".csv"), trace_csv(c.trace));
    write_text_file(out_dir / "traces" / (stem + ".json"), trace_summary_json(c.trace).dump(2) + "\n");
    for (const auto& r : c.trace.records)
      for (std::size_t i = 0; i < r.rse.size(); ++i)
        long_csv << to_string(c.algo) << ',' << format_double(c.kappa) << ',' << c.seed << ','
                 << r.round << ',' << i << ',' << format_double(r.rse[i]) << '\n';
    any_trace = true;
  }
  summary["cells"] = index;
  write_text_file(out_dir / "summary.json", summary.dump(2) + "\n");
  if (any_trace)
    write_text_file(out_dir / "convergence_long.csv",
                    "algo,kappa,seed,round,agent,rse\n" + long_csv.str());
}

std::string format_table(const SummaryTable& table) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "algo" << std::right << std::setw(7) << "kappa"
      << std::setw(7) << "runs" << std::setw(9) << "success" << std::setw(12) << "rounds"
      << std::setw(10) << "+/-" << std::setw(14) << "bytes/agent" << std::setw(12) << "+/-"
      << '\n';
  out << std::fixed;
  for (const auto& r : table.rows) {
    out << std::left << std::setw(12) << r.algo << std::right << std::setprecision(2)
        << std::setw(7) << r.kappa << std::setw(7) << r.runs << std::setprecision(1)
        << std::setw(8) << r.success_rate << '%' << std::setw(12) << r.rounds_mean
        << std::setw(10) << r.rounds_std << std::setprecision(0) << std::setw(14) << r.bytes_mean
        << std::setw(12) << r.bytes_std << '\n';
  }
  return out.str();
}

}  // namespace dqnmesh
