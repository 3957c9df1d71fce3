#include "dqnmesh/harness.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dqnmesh;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dqnmesh_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.n_agents = 5;
  c.dim = 4;
  c.kappas = {0.6};
  c.seeds = {3};
  c.algos = {Algorithm::DqnBfgs};
  c.tol = 1e-8;
  c.max_iters = 500;
  c.alpha = 0.1;
  c.c0 = 3.0;
  return c;
}

int count_lines(const std::string& text) {
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

// Summary JSON with the wall clock removed, for byte comparisons.
std::string strip_wall_time(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  j.erase("wall_time_ms");
  return j.dump();
}

}  // namespace

TEST_CASE("experiment config json round trip") {
  ExperimentConfig c = default_experiment();
  c.step_mode = StepMode::Golden;
  c.cond = {42, 172};
  c.search.grid_points = 5;
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back == c);
  CHECK(back.seeds.size() == 20);

  nlohmann::json j = c.to_json();
  j["bogus"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), InputError);

  const auto str_cond = ExperimentConfig::from_json({{"cond", "42:172"}, {"seeds", {1}}});
  CHECK(str_cond.cond.lo == 42);
  const auto bp = ExperimentConfig::from_json({{"family", "basis-pursuit"}, {"seeds", {1}}, {"algos", {"ecdqn-bfgs"}}});
  CHECK(bp.constrained);

  ExperimentConfig bad = tiny_config();
  bad.algos = {Algorithm::EcdqnBfgs};
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = tiny_config();
  bad.kappas = {0.1};
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = tiny_config();
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), InputError);
  CHECK(parse_step_mode("golden") == StepMode::Golden);
  CHECK(parse_step_mode("golden-section") == StepMode::Golden);
  CHECK_THROWS_AS(parse_step_mode("armijo"), InputError);
}

TEST_CASE("single-cell sweep yields one summary row") {
  const ExperimentResult r = run_experiment(tiny_config());
  REQUIRE(r.cells.size() == 1);
  REQUIRE(r.table.rows.size() == 1);
  const SummaryRow& row = r.table.rows[0];
  CHECK(row.algo == "dqn-bfgs");
  CHECK(row.runs == 1);
  CHECK(row.converged == 1);
  CHECK(row.success_rate == 100.0);
  CHECK(row.rounds_mean == r.cells[0].trace.rounds());
  CHECK(row.rounds_std == 0.0);
  CHECK(row.bytes_mean == r.cells[0].trace.total_bytes_mean());
  CHECK(r.table.find("dqn-bfgs", 0.6) == &r.table.rows[0]);
  CHECK(r.table.find("dqn-dfp", 0.6) == nullptr);
  CHECK_FALSE(r.any_aborted());
  CHECK(SummaryTable::from_json(r.table.to_json()) == r.table);
  CHECK(format_table(r.table).find("dqn-bfgs") != std::string::npos);
}

TEST_CASE("summary statistics over hand-built cells") {
  std::vector<CellResult> cells(3);
  for (int k = 0; k < 3; ++k) {
    cells[k].algo = Algorithm::DigingAtc;
    cells[k].kappa = 0.3;
    cells[k].trace.records.resize(static_cast<std::size_t>(11 + 10 * k));
    for (auto& rec : cells[k].trace.records) rec.bytes_sent = {100, 300};
    cells[k].trace.status = k < 2 ? RunStatus::Converged : RunStatus::MaxIters;
  }
  const SummaryTable t = summarize(cells);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].runs == 3);
  CHECK(t.rows[0].converged == 2);
  CHECK(t.rows[0].success_rate == doctest::Approx(200.0 / 3.0));
  CHECK(t.rows[0].rounds_mean == doctest::Approx(15.0));
  CHECK(t.rows[0].rounds_std == doctest::Approx(std::sqrt(50.0)));
  CHECK(t.rows[0].bytes_mean == doctest::Approx(200.0));
  CHECK(t.rows[0].bytes_max_mean == doctest::Approx(300.0));
}

TEST_CASE("empty result emits a header-only report") {
  const fs::path dir = scratch("empty");
  emit_report(summarize({}), {}, dir);
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(j.at("rows").empty());
  CHECK(j.at("cells").empty());
  CHECK_FALSE(fs::exists(dir / "convergence_long.csv"));
  CHECK_FALSE(fs::exists(dir / "traces"));
}

TEST_CASE("trace files have one row per agent per round and validate") {
  const fs::path dir = scratch("traces");
  const ExperimentConfig c = tiny_config();
  const ExperimentResult r = run_experiment(c);
  emit_report(r.table, r.cells, dir);
  const std::string stem = cell_stem(r.cells[0]);
  CHECK(stem == "dqn-bfgs_k0.60_s3");
  const std::string csv = slurp(dir / "traces" / (stem + ".csv"));
  const auto summary = nlohmann::json::parse(slurp(dir / "traces" / (stem + ".json")));
  CHECK(csv.rfind(std::string(kTraceHeader) + "\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + (r.cells[0].trace.rounds() + 1) * c.n_agents);
  CHECK(summary.at("converged") == true);
  CHECK(summary.at("rounds") == r.cells[0].trace.rounds());
  CHECK(summary.contains("total_bytes_per_agent_mean"));
  CHECK(summary.contains("wall_time_ms"));
  const ValidationReport ok = validate_trace(csv, summary);
  CHECK(ok.ok);
  CHECK(ok.rows == (r.cells[0].trace.rounds() + 1) * c.n_agents);

  // Tamper with the last byte counter.
  std::string bad = csv;
  bad.insert(bad.size() - 1, "1");
  const ValidationReport broken = validate_trace(bad, summary);
  CHECK_FALSE(broken.ok);
  CHECK_FALSE(broken.failures.empty());

  const std::string long_csv = slurp(dir / "convergence_long.csv");
  CHECK(long_csv.rfind("algo,kappa,seed,round,agent,rse\n", 0) == 0);
  CHECK(count_lines(long_csv) == 1 + (r.cells[0].trace.rounds() + 1) * c.n_agents);
}

TEST_CASE("constrained traces carry the extra columns") {
  SeparableProblem p = qp_family(4, 5, {2.1, 2.6}, 6, true);
  RunConfig rc;
  rc.algo = Algorithm::EcdqnBfgs;
  rc.alpha = 0.2;
  rc.max_iters = 20;
  const RunTrace t = run_algorithm(p, random_connected_graph(4, 0.5, 1), rc);
  const std::string csv = trace_csv(t);
  CHECK(csv.rfind(std::string(kTraceHeader) + ",feasibility,beta_norm\n", 0) == 0);
  CHECK(validate_trace(csv, trace_summary_json(t)).ok);
}

TEST_CASE("a cell whose run throws is marked aborted") {
  ExperimentConfig c = tiny_config();
  SeparableProblem p = generate_problem(cell_problem_spec(c, 3));
  p.reference_solution.reset();
  const CommGraph g = random_connected_graph(5, 0.6, 1);
  const CellResult cell = run_cell(c, p, g, Algorithm::DqnBfgs, 0.6, 3);
  CHECK(cell.aborted);
  CHECK(cell.reason.find("reference") != std::string::npos);
  ExperimentResult r;
  r.cells = {cell};
  r.table = summarize(r.cells);
  CHECK(r.any_aborted());
  CHECK(r.table.rows[0].aborted == 1);
  CHECK(r.table.rows[0].success_rate == 0.0);

  const fs::path dir = scratch("aborted");
  emit_report(r.table, r.cells, dir);
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(j.at("cells")[0].at("aborted") == true);
  CHECK_FALSE(fs::exists(dir / "convergence_long.csv"));
}

TEST_CASE("sweeps are deterministic and thread-count independent") {
  ExperimentConfig c = tiny_config();
  c.seeds = {1, 2};
  c.kappas = {0.6, 1.0};
  c.algos = {Algorithm::DqnDfp, Algorithm::DigingAtc};
  ExperimentConfig par = c;
  par.threads = 3;
  par.round_threads = 2;
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const ExperimentResult ra = run_experiment(c);
  const ExperimentResult rb = run_experiment(par);
  emit_report(ra.table, ra.cells, a);
  emit_report(rb.table, rb.cells, b);
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(slurp(a / "convergence_long.csv") == slurp(b / "convergence_long.csv"));
  for (const auto& cell : ra.cells) {
    const std::string stem = cell_stem(cell);
    CHECK(slurp(a / "traces" / (stem + ".csv")) == slurp(b / "traces" / (stem + ".csv")));
    CHECK(strip_wall_time(slurp(a / "traces" / (stem + ".json"))) ==
          strip_wall_time(slurp(b / "traces" / (stem + ".json"))));
  }
}

TEST_CASE("golden-section search is deterministic and beats the grid") {
  ExperimentConfig c = tiny_config();
  SeparableProblem p = generate_problem(cell_problem_spec(c, 4));
  attach_reference(p);
  const CommGraph g = random_connected_graph(5, 0.6, 2);
  c.max_iters = 1000;
  const RunConfig rc = cell_run_config(c, Algorithm::DqnDfp, 4);
  StepSearch s;
  const TunedStep one = golden_section_step(p, g, rc, s);
  const TunedStep two = golden_section_step(p, g, rc, s);
  CHECK(one.alpha == two.alpha);
  CHECK(one.evaluations == two.evaluations);
  CHECK(one.evaluations <= s.grid_points + s.golden_iters + 2);
  CHECK(one.trace.converged());
  CHECK(one.trace.alpha == one.alpha);
  CHECK(std::log10(one.alpha) >= s.log10_lo - 1e-12);
  CHECK(std::log10(one.alpha) <= s.log10_hi + 1e-12);
  RunConfig grid_rc = rc;
  for (int k = 0; k < s.grid_points; ++k) {
    grid_rc.alpha = std::pow(10.0, s.log10_lo + (s.log10_hi - s.log10_lo) * k / (s.grid_points - 1));
    CHECK(step_score(one.trace, rc) <= step_score(run_algorithm(p, g, grid_rc), rc));
  }
}

TEST_CASE("step score ordering and auto step") {
  RunConfig rc;
  rc.max_iters = 100;
  rc.tol = 1e-10;
  RunTrace conv;
  conv.status = RunStatus::Converged;
  conv.records.resize(31);
  RunTrace slow;
  slow.status = RunStatus::MaxIters;
  slow.records.resize(101);
  slow.records.back().rse = {1e-8};
  RunTrace div;
  div.status = RunStatus::Diverged;
  CHECK(step_score(conv, rc) == 30.0);
  CHECK(step_score(conv, rc) < step_score(slow, rc));
  CHECK(step_score(slow, rc) < step_score(div, rc));

  const SeparableProblem p = qp_family(6, 5, {2.1, 2.6}, 1);
  const CommGraph g = random_connected_graph(6, 0.5, 1);
  const double a = auto_step_size(p, g, rc);
  CHECK(a > 0.0);
  CHECK(a <= 1.0);
  CHECK(step_size_smoothness(p) == doctest::Approx(1.0));
}
