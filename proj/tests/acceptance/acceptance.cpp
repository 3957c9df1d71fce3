// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.
//
//   acceptance            run everything
//   acceptance AC4 AC7    run a subset

#include "dqnmesh/harness.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace dqnmesh;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double min_eig(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

Matrix spd(Rng& rng, int n, double lo, double hi) { return random_spd(n, lo, hi, rng); }

// ---------------------------------------------------------------------------

Outcome ac1() {
  const auto t0 = Clock::now();
  Rng rng(1);
  std::uniform_int_distribution<int> nd(3, 50);
  std::uniform_real_distribution<double> kd(0.2, 1.0);
  double worst_sum = 0.0, worst_lambda = 0.0;
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = nd(rng);
    const double kappa = std::max(kd(rng), 2.0 / n);
    const CommGraph g = random_connected_graph(n, kappa, 500 + t);
    const MixingMatrix m = metropolis_weights(g);
    const double dev = std::max((m.w.rowwise().sum().array() - 1.0).abs().maxCoeff(),
                                (m.w.colwise().sum().array() - 1.0).abs().maxCoeff());
    worst_sum = std::max(worst_sum, dev);
    worst_lambda = std::max(worst_lambda, m.lambda);
    if (!g.is_connected() || dev > 1e-12 || !(m.lambda < 1.0) || m.w.minCoeff() < 0) ++bad;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = bad == 0 && secs < 10.0;
  o.detail = "100 graphs, max row/col sum error " + fmt("%.1e", worst_sum) + ", max lambda " +
             fmt("%.4f", worst_lambda) + ", " + fmt("%.2fs", secs) + " (limit 10s)";
  return o;
}

Outcome ac2() {
  const auto t0 = Clock::now();
  Rng rng(2);
  std::uniform_int_distribution<int> nd(2, 20);
  double secant = 0.0, sym = 0.0, duality = 0.0;
  int not_pd = 0, skipped = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = nd(rng);
    const Matrix c0 = spd(rng, n, 0.5, 2.0);
    const Matrix h = spd(rng, n, 0.5, 2.0);
    const Vector s = random_normal(rng, n);
    const Vector y = h * s;
    const CurvaturePair p{s, y};
    const auto bi = bfgs_inverse_update({c0}, p);
    const auto di = dfp_inverse_update({c0}, p);
    const auto bh = bfgs_hessian_update({c0}, p);
    const auto dh = dfp_hessian_update({c0}, p);
    const auto bi_from = bfgs_inverse_update({c0.inverse()}, p);
    const auto di_from = dfp_inverse_update({c0.inverse()}, p);
    const auto swapped = dfp_hessian_update({c0}, {y, s});
    if (!(bi && di && bh && dh && bi_from && di_from && swapped)) {
      ++skipped;
      continue;
    }
    for (const Matrix* m : {&bi->c, &di->c}) {
      secant = std::max(secant, (*m * y - s).norm() / s.norm());
      sym = std::max(sym, (*m - m->transpose()).cwiseAbs().maxCoeff() / m->cwiseAbs().maxCoeff());
      not_pd += min_eig(*m) <= 0;
    }
    for (const Matrix* m : {&bh->b, &dh->b}) {
      secant = std::max(secant, (*m * s - y).norm() / y.norm());
      sym = std::max(sym, (*m - m->transpose()).cwiseAbs().maxCoeff() / m->cwiseAbs().maxCoeff());
      not_pd += min_eig(*m) <= 0;
    }
    const Matrix eye = Matrix::Identity(n, n);
    duality = std::max(duality, (bh->b * bi_from->c - eye).cwiseAbs().maxCoeff());
    duality = std::max(duality, (dh->b * di_from->c - eye).cwiseAbs().maxCoeff());
    duality = std::max(duality, (swapped->b - bi->c).cwiseAbs().maxCoeff() / bi->c.cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = skipped == 0 && secant <= 1e-10 && sym <= 1e-12 && not_pd == 0 && duality <= 1e-8 &&
           secs < 30.0;
  o.detail = "1000 instances x 4 rules, secant " + fmt("%.1e", secant) + ", symmetry " +
             fmt("%.1e", sym) + ", non-PD " + std::to_string(not_pd) + ", duality " +
             fmt("%.1e", duality) + ", " + fmt("%.2fs", secs) + " (limit 30s)";
  return o;
}

Outcome ac3() {
  double worst = 0.0;
  int violations = 0, runs = 0;
  for (int r = 0; r < 10; ++r) {
    const SeparableProblem p = qp_family(8, 6, {2.1, 2.6}, 300 + r);
    const SeparableProblem pc = qp_family(8, 6, {2.1, 2.6}, 400 + r, true);
    const CommGraph g = random_connected_graph(8, 0.3 + 0.05 * r, 600 + r);
    RunConfig dqn;
    dqn.algo = r % 2 ? Algorithm::DqnDfp : Algorithm::DqnBfgs;
    dqn.c0 = 3.0;
    dqn.init_seed = r;
    dqn.max_iters = 300;
    RunConfig ec = dqn;
    ec.algo = r % 2 ? Algorithm::EcdqnDfp : Algorithm::EcdqnBfgs;
    // Steps tuned as in the sweeps.
    StepSearch search;
    search.golden_iters = 4;
    std::vector<RunTrace> traces;
    for (const RunConfig& rc : {dqn, ec}) {
      const SeparableProblem& prob = is_constrained_algorithm(rc.algo) ? pc : p;
      traces.push_back(golden_section_step(prob, g, rc, search).trace);
    }
    for (const RunTrace& t : traces) {
      ++runs;
      for (const auto& rec : t.records) {
        worst = std::max(worst, rec.tracking_gap / (1 + rec.mean_grad_norm));
        violations += rec.tracking_gap > 1e-12 * (1 + rec.mean_grad_norm);
      }
    }
  }
  Outcome o;
  o.pass = violations == 0;
  o.detail = std::to_string(runs) + " runs (10 DQN, 10 EC-DQN), worst |mean v - mean g|/(1+|mean g|) " +
             fmt("%.1e", worst) + ", violating rounds " + std::to_string(violations);
  return o;
}

ExperimentConfig well_conditioned() {
  ExperimentConfig c;
  c.n_agents = 10;
  c.dim = 10;
  c.cond = {2.0, 3.0};
  c.kappas = {0.6};
  for (std::uint64_t s = 0; s < 20; ++s) c.seeds.push_back(s);
  c.algos = {Algorithm::DqnBfgs, Algorithm::DqnDfp};
  c.tol = 1e-10;
  c.max_iters = 1000;
  c.step_mode = StepMode::Golden;
  c.c0 = 3.0;
  return c;
}

Outcome ac4() {
  const auto t0 = Clock::now();
  const ExperimentConfig c = well_conditioned();
  const ExperimentResult r = run_experiment(c);
  std::vector<double> f_star(c.seeds.size());
  for (std::size_t s = 0; s < c.seeds.size(); ++s) {
    SeparableProblem p = generate_problem(cell_problem_spec(c, c.seeds[s]));
    f_star[s] = p.value(*p.reference_solution);
  }
  double cons = 0.0, gap = 0.0;
  int bad_final = 0;
  for (const auto& cell : r.cells) {
    if (cell.aborted || !cell.trace.converged()) continue;
    const auto& last = cell.trace.records.back();
    const double e = std::max({last.x_consensus_err, last.v_consensus_err, last.z_consensus_err});
    const double fs_ = f_star[cell.seed];
    const double og = std::abs(last.objective - fs_) / (1 + std::abs(fs_));
    cons = std::max(cons, e);
    gap = std::max(gap, og);
    bad_final += e > 1e-8 || og > 1e-8;
  }
  const double secs = seconds_since(t0);
  const SummaryRow* b = r.table.find("dqn-bfgs", 0.6);
  const SummaryRow* d = r.table.find("dqn-dfp", 0.6);
  Outcome o;
  o.pass = b && d && b->converged == 20 && d->converged == 20 && bad_final == 0 && secs < 60.0;
  o.detail = "kappa 0.6, converged dqn-bfgs " + std::to_string(b ? b->converged : 0) +
             "/20, dqn-dfp " + std::to_string(d ? d->converged : 0) + "/20, max final consensus " +
             fmt("%.1e", cons) + ", max objective gap " + fmt("%.1e", gap) + ", " +
             fmt("%.1fs", secs) + " (limit 60s)";
  return o;
}

Outcome ac5() {
  const auto t0 = Clock::now();
  ExperimentConfig c = well_conditioned();
  c.cond = {42, 172};
  c.algos = {Algorithm::DqnBfgs, Algorithm::DqnDfp, Algorithm::DigingAtc};
  const ExperimentResult r = run_experiment(c);
  const SummaryRow* b = r.table.find("dqn-bfgs", 0.6);
  const SummaryRow* d = r.table.find("dqn-dfp", 0.6);
  const SummaryRow* g = r.table.find("diging-atc", 0.6);
  Outcome o;
  o.pass = b && d && g && b->success_rate == 100.0 && d->success_rate == 100.0 &&
           g->success_rate <= 50.0;
  o.detail = "cond [42,172], kappa 0.6, success dqn-bfgs " + fmt("%.0f%%", b ? b->success_rate : 0) +
             ", dqn-dfp " + fmt("%.0f%%", d ? d->success_rate : 0) + ", diging-atc " +
             fmt("%.0f%%", g ? g->success_rate : 0) + " (need 100/100/<=50), " +
             fmt("%.1fs", seconds_since(t0));
  return o;
}

Outcome ac6() {
  struct Case {
    Algorithm algo;
    std::uint64_t per_scalar;
  };
  int checked = 0, mismatches = 0;
  for (const Case& k : {Case{Algorithm::DqnBfgs, 24}, Case{Algorithm::DqnDfp, 24},
                        Case{Algorithm::DigingAtc, 16}, Case{Algorithm::EcdqnBfgs, 24}}) {
    for (int t = 0; t < 5; ++t) {
      const int n_agents = 4 + 3 * t, dim = 3 + t;
      const bool con = is_constrained_algorithm(k.algo);
      const SeparableProblem p = qp_family(n_agents, dim, {2.1, 2.6}, 700 + t, con);
      const CommGraph g = random_connected_graph(n_agents, std::max(0.4, 2.0 / n_agents), 800 + t);
      RunConfig rc;
      rc.algo = k.algo;
      rc.alpha = con ? 0.2 : 0.1;
      rc.c0 = 3.0;
      rc.max_iters = 40 + 10 * t;
      rc.tol = 1e-14;
      const RunTrace tr = run_algorithm(p, g, rc);
      for (const auto& rec : tr.records)
        for (int i = 0; i < n_agents; ++i) {
          ++checked;
          const std::uint64_t expect = k.per_scalar * static_cast<std::uint64_t>(dim) *
                                       static_cast<std::uint64_t>(g.degree(i)) *
                                       static_cast<std::uint64_t>(rec.round);
          mismatches += rec.bytes_sent[i] != expect;
        }
      mismatches += !validate_trace(trace_csv(tr), trace_summary_json(tr)).ok;
    }
  }
  Outcome o;
  o.pass = mismatches == 0 && checked > 0;
  o.detail = std::to_string(checked) +
             " (agent, round) counters vs 24/16/24 n deg k (DQN/DIGing-ATC/EC-DQN fused), mismatches " +
             std::to_string(mismatches);
  return o;
}

Outcome ac7() {
  const auto t0 = Clock::now();
  struct Fam {
    Family family;
    double tol;
  };
  Outcome o;
  std::string detail;
  for (const Fam& f : {Fam{Family::LogReg, 1e-7}, Fam{Family::BasisPursuit, 1e-8}}) {
    ExperimentConfig c;
    c.family = f.family;
    c.constrained = true;
    c.n_agents = 10;
    c.dim = 10;
    c.xi = 0.01;
    c.kappas = {0.3, 0.6};
    for (std::uint64_t s = 0; s < 20; ++s) c.seeds.push_back(s);
    c.algos = {Algorithm::EcdqnBfgs, Algorithm::EcdqnDfp};
    c.tol = f.tol;
    c.max_iters = 1000;
    c.step_mode = StepMode::Golden;
    const ExperimentResult r = run_experiment(c);

    std::vector<SeparableProblem> problems;
    for (auto s : c.seeds) problems.push_back(generate_problem(cell_problem_spec(c, s)));
    double feas = 0.0, stat = 0.0;
    int bad = 0;
    for (const auto& cell : r.cells) {
      if (cell.aborted || !cell.trace.converged() || cell.algo != Algorithm::EcdqnBfgs) continue;
      const SeparableProblem& p = problems[cell.seed];
      const Vector xm = cell.trace.mean_x();
      const Vector bm = cell.trace.final_beta.colwise().mean().transpose();
      double fe = 0.0;
      for (double v : cell.trace.records.back().feasibility) fe = std::max(fe, v);
      const double st = stationarity_residual(p, xm, bm) / (1 + p.gradient(xm).norm());
      feas = std::max(feas, fe);
      stat = std::max(stat, st);
      bad += fe > 1e-6 || st > 1e-5;
    }
    const std::string name = to_string(f.family);
    detail += name + ":";
    for (double kappa : c.kappas) {
      const SummaryRow* b = r.table.find("ecdqn-bfgs", kappa);
      const SummaryRow* d = r.table.find("ecdqn-dfp", kappa);
      const int conv = b ? b->converged : 0;
      o.pass = o.pass && conv >= 19;
      detail += " k" + fmt("%.1f", kappa) + " bfgs " + std::to_string(conv) + "/20 (dfp " +
                std::to_string(d ? d->converged : 0) + "/20)";
    }
    o.pass = o.pass && bad == 0;
    detail += ", feas " + fmt("%.1e", feas) + ", stationarity " + fmt("%.1e", stat) + "; ";
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && secs < 300.0;
  o.detail = detail + fmt("%.1fs", secs) + " (limit 300s)";
  return o;
}

Outcome ac8() {
  double central = 0.0, kkt = 0.0, joint = 0.0;
  for (bool bfgs : {true, false}) {
    const SeparableProblem p = qp_family(1, 8, {2.1, 2.6}, bfgs ? 1 : 2);
    RunConfig rc;
    rc.algo = bfgs ? Algorithm::DqnBfgs : Algorithm::DqnDfp;
    rc.alpha = 0.1;
    rc.c0 = 1.0;
    SyncNetwork net(CommGraph(1, {}));
    const Stack x0 = initial_iterates(p, rc);
    DqnState st = dqn_initialize(net, p, x0, rc);
    const auto path = oracle::centralized_qn(p, x0.row(0).transpose(), rc.alpha, rc.c0, bfgs, 50);
    for (int k = 1; k <= 50; ++k) {
      dqn_step(net, st, p, rc);
      central = std::max(central, (st.x.row(0).transpose() - path[k]).norm() / (1 + path[k].norm()));
    }

    const SeparableProblem p3 = qp_family(3, 5, {2.1, 2.6}, bfgs ? 3 : 4);
    rc.alpha = 0.3;
    rc.c0 = 3.0;
    SyncNetwork net3(CommGraph::path(3));
    const Stack x3 = initial_iterates(p3, rc);
    DqnState s3 = dqn_initialize(net3, p3, x3, rc);
    oracle::JointDqn jd(p3, net3.weights().w, oracle::flatten(x3), rc.alpha, rc.c0);
    for (int k = 0; k < 2; ++k) {
      dqn_step(net3, s3, p3, rc);
      jd.step(p3, bfgs);
      joint = std::max({joint, (oracle::flatten(s3.x) - jd.x).norm(),
                        (oracle::flatten(s3.v) - jd.v).norm(), (oracle::flatten(s3.z) - jd.z).norm()});
    }
  }
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    const int n = std::uniform_int_distribution<int>(3, 20)(rng);
    const int m = std::uniform_int_distribution<int>(1, std::max(1, n / 2))(rng);
    const KktSystem sys{spd(rng, n, 1e-3, 10.0), random_normal(rng, m, n), random_normal(rng, n),
                        random_normal(rng, m)};
    kkt = std::max(kkt, kkt_relative_residual(sys, kkt_solve(sys)));
  }
  Outcome o;
  o.pass = central <= 1e-12 && kkt <= 1e-10 && joint <= 1e-12;
  o.detail = "N=1 vs centralized (50 steps) " + fmt("%.1e", central) + ", KKT residual (500 solves) " +
             fmt("%.1e", kkt) + ", 3-agent joint oracle (2 rounds) " + fmt("%.1e", joint);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome ac9() {
  const fs::path root = fs::temp_directory_path() / "dqnmesh_ac9";
  fs::remove_all(root);
  ExperimentConfig unc;
  unc.n_agents = 8;
  unc.dim = 6;
  unc.kappas = {0.3, 0.8};
  unc.seeds = {0, 1, 2};
  unc.algos = {Algorithm::DqnBfgs, Algorithm::DqnDfp, Algorithm::DigingAtc};
  unc.step_mode = StepMode::Golden;
  unc.search.golden_iters = 4;
  unc.c0 = 3.0;
  unc.max_iters = 400;
  ExperimentConfig con = unc;
  con.constrained = true;
  con.algos = {Algorithm::EcdqnBfgs, Algorithm::EcdqnDfp};
  con.step_mode = StepMode::Fixed;
  con.alpha = 0.2;

  int files = 0, diffs = 0;
  for (const auto& [name, cfg] : {std::pair{"qp", unc}, std::pair{"ec", con}}) {
    ExperimentConfig serial = cfg;
    ExperimentConfig parallel = cfg;
    parallel.threads = 4;
    parallel.round_threads = 3;
    const ExperimentResult a = run_experiment(serial);
    const ExperimentResult b = run_experiment(parallel);
    const fs::path da = root / name / "serial", db = root / name / "parallel";
    emit_report(a.table, a.cells, da);
    emit_report(b.table, b.cells, db);
    for (const auto& entry : fs::recursive_directory_iterator(da)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), da);
      std::string ta = slurp(entry.path()), tb = slurp(db / rel);
      if (rel.extension() == ".json" && rel.parent_path() == "traces") {
        auto ja = nlohmann::json::parse(ta), jb = nlohmann::json::parse(tb);
        ja.erase("wall_time_ms");
        jb.erase("wall_time_ms");
        ta = ja.dump(2);
        tb = jb.dump(2);
      }
      ++files;
      diffs += ta != tb;
    }
  }
  fs::remove_all(root);
  Outcome o;
  o.pass = files > 0 && diffs == 0;
  o.detail = std::to_string(files) + " emitted files compared (threads 1/1 vs 4/3), differing " +
             std::to_string(diffs);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}};
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    failed += !o.pass;
    std::printf("%s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
