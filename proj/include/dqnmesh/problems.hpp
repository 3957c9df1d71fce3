#pragma once

#include "dqnmesh/common.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dqnmesh {

/// f_i(x) = 1/2 x^T P x + q^T x.
struct QpLocalData {
  Matrix p;
  Vector q;
};

/// f_i(x) = sum_j ln(1 + exp(-b_j a_j^T x)) + reg/2 |x|^2, one sample per row.
struct LogRegLocalData {
  Matrix features;
  Vector labels;
  double reg = 0.0;
};

/// f_i(x) = 1/2 |A x - b|^2 + l1 |x|_1. Only subdifferentiable when l1 > 0.
struct LeastSquaresL1Data {
  Matrix a;
  Vector b;
  double l1 = 0.0;
};

using LocalData = std::variant<QpLocalData, LogRegLocalData, LeastSquaresL1Data>;

class LocalObjective {
 public:
  explicit LocalObjective(LocalData data);

  int dim() const noexcept { return dim_; }
  double value(const Vector& x) const;
  /// Gradient, or the minimum-norm-sign subgradient (sign(0) = 0) for the l1 term.
  Vector gradient(const Vector& x) const;
  /// Hessian of the smooth part.
  Matrix hessian(const Vector& x) const;
  /// Global Lipschitz constant of the (smooth part of the) gradient.
  double smoothness_bound() const noexcept { return smoothness_; }
  bool nonsmooth() const noexcept { return nonsmooth_; }
  const LocalData& data() const noexcept { return data_; }

 private:
  LocalData data_;
  int dim_ = 0;
  double smoothness_ = 0.0;
  bool nonsmooth_ = false;
};

/// Shared linear equality constraint A x = b known to every agent.
struct EqualityConstraint {
  Matrix a;
  Vector b;

  Eigen::Index rows() const noexcept { return a.rows(); }
  Vector residual(const Vector& x) const { return a * x - b; }
};

enum class Family { Qp, LogReg, BasisPursuit };

const char* to_string(Family family);
Family parse_family(const std::string& name);

struct CondRange {
  double lo = 2.1;
  double hi = 2.6;
};

CondRange parse_cond_range(const std::string& text);

/// minimize (1/N) sum_i f_i(x) [subject to A x = b].
///
/// value()/gradient() are the agent-averaged objective, which is the quantity
/// every agent's tracker estimates. The optional multiplier is for that scaling.
struct SeparableProblem {
  Family family = Family::Qp;
  std::vector<LocalObjective> locals;
  std::optional<EqualityConstraint> constraint;
  std::optional<Vector> reference_solution;
  std::optional<Vector> reference_multiplier;
  double xi = 0.0;
  std::uint64_t seed = 0;

  int n_agents() const noexcept { return static_cast<int>(locals.size()); }
  int dim() const;
  bool nonsmooth() const;

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  Matrix hessian(const Vector& x) const;
  /// Lipschitz bound for the mean gradient: mean of the local bounds.
  double smoothness_estimate() const;

  /// Checks shared dimension and full row rank of the constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static SeparableProblem from_json(const nlohmann::json& j);
};

// Generators. Sample counts per agent follow Uniform[5, 30) at n = 40 and are
// scaled proportionally to n. Aggregate Hessians of the QP and basis-pursuit
// families are rescaled along their eigenbasis so that the mean Hessian has top
// eigenvalue 1 and condition number drawn uniformly from the requested range.

SeparableProblem qp_family(int n_agents, int dim, CondRange cond, std::uint64_t seed,
                           bool constrained = false);

SeparableProblem logreg_family(int n_agents, int dim, double xi, std::uint64_t seed,
                               std::optional<EqualityConstraint> constraint = std::nullopt);

/// When constraint is absent one is drawn with e = F x_true, where x_true is
/// the dense signal that generated the measurements.
SeparableProblem basis_pursuit_family(int n_agents, int dim, double xi, CondRange cond,
                                      std::uint64_t seed,
                                      std::optional<EqualityConstraint> constraint = std::nullopt);

/// m ~ Uniform{2..max(2, n/4)} (capped below n) orthonormal rows, rhs = F x_feas.
EqualityConstraint random_constraint(int dim, const Vector& x_feas, Rng& rng);

/// Samples-per-agent interval [lo, hi) at a given dimension.
std::pair<int, int> sample_count_range(int dim);

/// Everything needed to regenerate a problem instance.
struct ProblemSpec {
  Family family = Family::Qp;
  int n_agents = 10;
  int dim = 10;
  CondRange cond{2.1, 2.6};
  double xi = 1e-2;
  bool constrained = false;
  std::uint64_t seed = 0;
};

SeparableProblem generate_problem(const ProblemSpec& spec);

struct ReferenceResult {
  Vector x;
  std::optional<Vector> multiplier;
  double residual = 0.0;
  int iterations = 0;
};

/// Centralized solve of the aggregate problem. QP: direct linear (or KKT)
/// solve. Smooth nonlinear: damped Newton (projected onto A dx = 0 when
/// constrained). Basis pursuit: sign-pattern iteration on the KKT system.
/// Throws ConvergenceError carrying the final residual on failure.
ReferenceResult solve_reference(const SeparableProblem& problem, double tol = 1e-12,
                                int max_iters = 200);

/// solve_reference, storing x* (and the multiplier) in the problem.
void attach_reference(SeparableProblem& problem, double tol = 1e-12);

/// Stationarity residual |mean grad(x) + A^T beta| (or |mean grad(x)|).
double stationarity_residual(const SeparableProblem& problem, const Vector& x,
                             const std::optional<Vector>& multiplier);

/// Maximum relative error between the gradient and central differences at x.
double gradient_check(const LocalObjective& f, const Vector& x, double step = 1e-6);

}  // namespace dqnmesh
