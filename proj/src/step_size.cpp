#include "dqnmesh/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace dqnmesh {

const char* to_string(StepMode mode) {
  switch (mode) {
    case StepMode::Fixed: return "fixed";
    case StepMode::Auto: return "auto";
    case StepMode::Golden: return "golden-section";
  }
  return "?";
}

StepMode parse_step_mode(const std::string& name) {
  if (name == "fixed") return StepMode::Fixed;
  if (name == "auto") return StepMode::Auto;
  if (name == "golden-section" || name == "golden") return StepMode::Golden;
  throw InputError("unknown step mode '" + name + "'");
}

double step_size_smoothness(const SeparableProblem& problem) {
  if (problem.family == Family::LogReg) return problem.smoothness_estimate();
  const Matrix h = problem.hessian(Vector::Zero(problem.dim()));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()[problem.dim() - 1];
}

double auto_step_size(const SeparableProblem& problem, const CommGraph& graph,
                      const RunConfig& config, double cap) {
  const MixingMatrix w = metropolis_weights(graph, config.epsilon);
  const double bound = safe_step_size(w.lambda, step_size_smoothness(problem), config.gamma,
                                      problem.dim(), problem.n_agents());
  return std::min(cap, 0.9 * bound);
}

double step_score(const RunTrace& trace, const RunConfig& config) {
  const double cap = static_cast<double>(config.max_iters);
  if (trace.converged()) return trace.rounds();
  if (trace.status == RunStatus::Diverged) return 4.0 * cap;
  // Non-converged: rank by how far the final error is from tolerance.
  const double err = trace.final_max_rse();
  const double gap = std::isfinite(err) && err > 0 ? std::log10(err / config.tol) : 30.0;
  return cap + 1.0 + 100.0 * std::clamp(gap, 0.0, 30.0);
}

TunedStep golden_section_step(const SeparableProblem& problem, const CommGraph& graph,
                              const RunConfig& config, const StepSearch& search) {
  if (!(search.log10_lo < search.log10_hi) || search.grid_points < 2)
    throw InputError("golden_section_step: invalid search bracket");

  std::map<double, std::pair<double, RunTrace>> evaluated;  // log10 alpha -> (score, trace)
  auto evaluate = [&](double e) -> double {
    if (auto it = evaluated.find(e); it != evaluated.end()) return it->second.first;
    RunConfig trial = config;
    trial.alpha = std::pow(10.0, e);
    trial.agent_alphas.clear();
    RunTrace trace = run_algorithm(problem, graph, trial);
    const double score = step_score(trace, trial);
    evaluated.emplace(e, std::make_pair(score, std::move(trace)));
    return score;
  };

  const double spacing = (search.log10_hi - search.log10_lo) / (search.grid_points - 1);
  int best_index = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (int k = 0; k < search.grid_points; ++k) {
    const double score = evaluate(search.log10_lo + k * spacing);
    // Ties go to the larger step.
    if (score <= best_score) {
      best_score = score;
      best_index = k;
    }
  }

  double a = search.log10_lo + std::max(0, best_index - 1) * spacing;
  double b = search.log10_lo + std::min(search.grid_points - 1, best_index + 1) * spacing;
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = evaluate(c);
  double fd = evaluate(d);
  for (int it = 0; it < search.golden_iters; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = evaluate(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = evaluate(d);
    }
  }

  // Best over everything evaluated; ties resolved toward the larger step.
  auto best = evaluated.begin();
  for (auto it = evaluated.begin(); it != evaluated.end(); ++it)
    if (it->second.first <= best->second.first) best = it;
  TunedStep out;
  out.alpha = std::pow(10.0, best->first);
  out.trace = std::move(best->second.second);
  out.evaluations = static_cast<int>(evaluated.size());
  return out;
}

}  // namespace dqnmesh
