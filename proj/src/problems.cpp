#include "dqnmesh/problems.hpp"

#include "dqnmesh/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dqnmesh {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// ln(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double logistic(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double sign0(double t) { return t > 0 ? 1.0 : (t < 0 ? -1.0 : 0.0); }

double spectral_norm_sq(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const double s = svd.singularValues()(0);
  return s * s;
}

// Rescales the spectrum of sum_i A_i^T A_i by replacing every factor with
// A_i T, T = V diag(sqrt(target/lambda)) V^T. The mean Hessian ends with top
// eigenvalue 1 and condition number `cond`.
void condition_factors(std::vector<Matrix>& factors, double cond) {
  const auto n = factors.front().cols();
  const auto count = static_cast<double>(factors.size());
  Matrix p = Matrix::Zero(n, n);
  for (const auto& a : factors) p.noalias() += a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p);
  const Vector lam = eig.eigenvalues();  // ascending
  const double lo = lam[0];
  const double hi = lam[n - 1];
  if (!(lo > 1e-12 * hi)) throw std::runtime_error("aggregate Hessian is singular before conditioning");
  Vector target(n);
  const double log_span = std::log(hi / lo);
  for (Eigen::Index k = 0; k < n; ++k) {
    // Position of eigenvalue k on [0, 1] in log scale; equal spectra spread by index.
    const double t = log_span > 1e-12 ? std::log(lam[k] / lo) / log_span
                                      : (n > 1 ? static_cast<double>(k) / (n - 1) : 1.0);
    target[k] = count * std::pow(cond, t - 1.0);
  }
  const Vector scale = (target.array() / lam.array()).sqrt();
  const Matrix t = eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
  for (auto& a : factors) a = (a * t).eval();
}

double draw_condition(CondRange cond, Rng& rng) {
  if (cond.hi == cond.lo) return cond.lo;
  std::uniform_real_distribution<double> dist(cond.lo, cond.hi);
  return dist(rng);
}

void check_cond_range(CondRange cond) {
  if (!(cond.lo >= 1.0) || !(cond.lo <= cond.hi))
    throw InputError("condition range must satisfy 1 <= lo <= hi");
}

std::vector<int> draw_sample_counts(int n_agents, int dim, int cap, Rng& rng) {
  auto [lo, hi] = sample_count_range(dim);
  hi = std::min(hi, cap + 1);
  lo = std::min(lo, hi - 1);
  std::uniform_int_distribution<int> dist(lo, hi - 1);
  std::vector<int> counts(n_agents);
  for (auto& m : counts) m = dist(rng);
  // The aggregate must have full rank.
  int total = std::accumulate(counts.begin(), counts.end(), 0);
  for (int i = n_agents - 1; total < dim; i = (i + n_agents - 1) % n_agents) {
    if (counts[i] < cap) {
      ++counts[i];
      ++total;
    } else if (std::all_of(counts.begin(), counts.end(), [cap](int c) { return c >= cap; })) {
      break;
    }
  }
  return counts;
}

// Dense LU on the full block system; used by the reference solver only.
std::pair<Vector, Vector> dense_kkt(const Matrix& h, const Matrix& a, const Vector& top,
                                    const Vector& bottom) {
  const auto n = h.rows();
  const auto m = a.rows();
  Matrix k = Matrix::Zero(n + m, n + m);
  k.topLeftCorner(n, n) = h;
  k.topRightCorner(n, m) = a.transpose();
  k.bottomLeftCorner(m, n) = a;
  Vector rhs(n + m);
  rhs << top, bottom;
  Eigen::FullPivLU<Matrix> lu(k);
  if (!lu.isInvertible()) throw FactorizationError("reference KKT matrix is singular");
  Vector sol = lu.solve(rhs);
  sol += lu.solve(rhs - k * sol);  // one refinement step
  return {sol.head(n), sol.tail(m)};
}

Vector least_squares_multiplier(const Matrix& a, const Vector& g) {
  // beta minimizing |g + A^T beta|.
  return -(a * a.transpose()).ldlt().solve(a * g);
}

}  // namespace

LocalObjective::LocalObjective(LocalData data) : data_(std::move(data)) {
  std::visit(overloaded{
                 [this](const QpLocalData& d) {
                   if (d.p.rows() != d.p.cols() || d.p.rows() != d.q.size())
                     throw InputError("QP local data: P must be n x n and q length n");
                   dim_ = static_cast<int>(d.q.size());
                   Eigen::SelfAdjointEigenSolver<Matrix> eig(d.p, Eigen::EigenvaluesOnly);
                   smoothness_ = dim_ > 0 ? std::max(0.0, eig.eigenvalues()[dim_ - 1]) : 0.0;
                 },
                 [this](const LogRegLocalData& d) {
                   if (d.features.rows() != d.labels.size() || d.features.rows() < 1)
                     throw InputError("logistic local data: need >= 1 sample and one label per row");
                   for (Eigen::Index k = 0; k < d.labels.size(); ++k)
                     if (d.labels[k] != 1.0 && d.labels[k] != -1.0)
                       throw InputError("logistic local data: labels must be +1 or -1");
                   if (d.reg < 0) throw InputError("logistic local data: negative regularizer");
                   dim_ = static_cast<int>(d.features.cols());
                   smoothness_ = 0.25 * spectral_norm_sq(d.features) + d.reg;
                 },
                 [this](const LeastSquaresL1Data& d) {
                   if (d.a.rows() != d.b.size())
                     throw InputError("least-squares local data: A rows must match b");
                   if (d.l1 < 0) throw InputError("least-squares local data: negative l1 weight");
                   dim_ = static_cast<int>(d.a.cols());
                   smoothness_ = spectral_norm_sq(d.a);
                   nonsmooth_ = d.l1 > 0;
                 },
             },
             data_);
}

double LocalObjective::value(const Vector& x) const {
  return std::visit(overloaded{
                        [&](const QpLocalData& d) { return 0.5 * x.dot(d.p * x) + d.q.dot(x); },
                        [&](const LogRegLocalData& d) {
                          const Vector margins = d.features * x;
                          double total = 0.0;
                          for (Eigen::Index k = 0; k < margins.size(); ++k)
                            total += softplus(-d.labels[k] * margins[k]);
                          return total + 0.5 * d.reg * x.squaredNorm();
                        },
                        [&](const LeastSquaresL1Data& d) {
                          return 0.5 * (d.a * x - d.b).squaredNorm() + d.l1 * x.lpNorm<1>();
                        },
                    },
                    data_);
}

Vector LocalObjective::gradient(const Vector& x) const {
  return std::visit(overloaded{
                        [&](const QpLocalData& d) -> Vector { return d.p * x + d.q; },
                        [&](const LogRegLocalData& d) -> Vector {
                          const Vector margins = d.features * x;
                          Vector weights(margins.size());
                          for (Eigen::Index k = 0; k < margins.size(); ++k)
                            weights[k] = -d.labels[k] * logistic(-d.labels[k] * margins[k]);
                          return d.features.transpose() * weights + d.reg * x;
                        },
                        [&](const LeastSquaresL1Data& d) -> Vector {
                          Vector g = d.a.transpose() * (d.a * x - d.b);
                          if (d.l1 > 0)
                            for (Eigen::Index k = 0; k < x.size(); ++k) g[k] += d.l1 * sign0(x[k]);
                          return g;
                        },
                    },
                    data_);
}

Matrix LocalObjective::hessian(const Vector& x) const {
  return std::visit(overloaded{
                        [&](const QpLocalData& d) -> Matrix { return d.p; },
                        [&](const LogRegLocalData& d) -> Matrix {
                          const Vector margins = d.features * x;
                          Vector curv(margins.size());
                          for (Eigen::Index k = 0; k < margins.size(); ++k) {
                            const double s = logistic(margins[k]);
                            curv[k] = s * (1.0 - s);
                          }
                          Matrix h = d.features.transpose() * curv.asDiagonal() * d.features;
                          h.diagonal().array() += d.reg;
                          return h;
                        },
                        [&](const LeastSquaresL1Data& d) -> Matrix { return d.a.transpose() * d.a; },
                    },
                    data_);
}

const char* to_string(Family family) {
  switch (family) {
    case Family::Qp: return "qp";
    case Family::LogReg: return "logreg";
    case Family::BasisPursuit: return "basis-pursuit";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "qp") return Family::Qp;
  if (name == "logreg") return Family::LogReg;
  if (name == "basis-pursuit") return Family::BasisPursuit;
  throw InputError("unknown problem family '" + name + "'");
}

CondRange parse_cond_range(const std::string& text) {
  const auto colon = text.find(':');
  CondRange out;
  try {
    if (colon == std::string::npos) {
      out.lo = out.hi = std::stod(text);
    } else {
      out = {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
    }
  } catch (const std::logic_error&) {
    throw InputError("condition range must look like lo:hi, got '" + text + "'");
  }
  check_cond_range(out);
  return out;
}

int SeparableProblem::dim() const { return locals.empty() ? 0 : locals.front().dim(); }

bool SeparableProblem::nonsmooth() const {
  return std::any_of(locals.begin(), locals.end(), [](const auto& f) { return f.nonsmooth(); });
}

double SeparableProblem::value(const Vector& x) const {
  double total = 0.0;
  for (const auto& f : locals) total += f.value(x);
  return total / n_agents();
}

Vector SeparableProblem::gradient(const Vector& x) const {
  Vector total = Vector::Zero(dim());
  for (const auto& f : locals) total += f.gradient(x);
  return total / n_agents();
}

Matrix SeparableProblem::hessian(const Vector& x) const {
  Matrix total = Matrix::Zero(dim(), dim());
  for (const auto& f : locals) total += f.hessian(x);
  return total / n_agents();
}

double SeparableProblem::smoothness_estimate() const {
  double total = 0.0;
  for (const auto& f : locals) total += f.smoothness_bound();
  return total / n_agents();
}

void SeparableProblem::validate() const {
  if (locals.empty()) throw InputError("problem has no agents");
  const int n = dim();
  if (n <= 0) throw InputError("problem dimension must be positive");
  for (const auto& f : locals)
    if (f.dim() != n) throw InputError("local objectives disagree on dimension");
  if (constraint) {
    const auto& c = *constraint;
    if (c.a.cols() != n || c.a.rows() != c.b.size())
      throw InputError("constraint shape does not match problem dimension");
    if (c.a.rows() > n) throw InputError("constraint has more rows than unknowns");
    Eigen::FullPivLU<Matrix> lu(c.a);
    if (lu.rank() != c.a.rows()) throw InputError("constraint matrix is not full row rank");
  }
  if (reference_solution && reference_solution->size() != n)
    throw InputError("reference solution has the wrong dimension");
}

nlohmann::json SeparableProblem::to_json() const {
  nlohmann::json locs = nlohmann::json::array();
  for (const auto& f : locals) {
    std::visit(overloaded{
                   [&](const QpLocalData& d) {
                     locs.push_back({{"p", dqnmesh::to_json(d.p)}, {"q", dqnmesh::to_json(d.q)}});
                   },
                   [&](const LogRegLocalData& d) {
                     locs.push_back({{"features", dqnmesh::to_json(d.features)},
                                     {"labels", dqnmesh::to_json(d.labels)},
                                     {"reg", d.reg}});
                   },
                   [&](const LeastSquaresL1Data& d) {
                     locs.push_back({{"a", dqnmesh::to_json(d.a)},
                                     {"b", dqnmesh::to_json(d.b)},
                                     {"l1", d.l1}});
                   },
               },
               f.data());
  }
  nlohmann::json j{{"family", to_string(family)},
                   {"n_agents", n_agents()},
                   {"dim", dim()},
                   {"xi", xi},
                   {"seed", seed},
                   {"locals", locs}};
  j["constraint"] = constraint ? nlohmann::json{{"a", dqnmesh::to_json(constraint->a)},
                                                {"b", dqnmesh::to_json(constraint->b)}}
                               : nlohmann::json(nullptr);
  j["reference_solution"] =
      reference_solution ? dqnmesh::to_json(*reference_solution) : nlohmann::json(nullptr);
  j["reference_multiplier"] =
      reference_multiplier ? dqnmesh::to_json(*reference_multiplier) : nlohmann::json(nullptr);
  return j;
}

SeparableProblem SeparableProblem::from_json(const nlohmann::json& j) {
  try {
    SeparableProblem p;
    p.family = parse_family(j.at("family").get<std::string>());
    p.xi = j.value("xi", 0.0);
    p.seed = j.value("seed", std::uint64_t{0});
    for (const auto& l : j.at("locals")) {
      switch (p.family) {
        case Family::Qp:
          p.locals.emplace_back(QpLocalData{matrix_from_json(l.at("p")), vector_from_json(l.at("q"))});
          break;
        case Family::LogReg:
          p.locals.emplace_back(LogRegLocalData{matrix_from_json(l.at("features")),
                                                vector_from_json(l.at("labels")),
                                                l.at("reg").get<double>()});
          break;
        case Family::BasisPursuit:
          p.locals.emplace_back(LeastSquaresL1Data{matrix_from_json(l.at("a")),
                                                   vector_from_json(l.at("b")),
                                                   l.at("l1").get<double>()});
          break;
      }
    }
    if (j.contains("constraint") && !j["constraint"].is_null())
      p.constraint = EqualityConstraint{matrix_from_json(j["constraint"].at("a")),
                                        vector_from_json(j["constraint"].at("b"))};
    if (j.contains("reference_solution") && !j["reference_solution"].is_null())
      p.reference_solution = vector_from_json(j["reference_solution"]);
    if (j.contains("reference_multiplier") && !j["reference_multiplier"].is_null())
      p.reference_multiplier = vector_from_json(j["reference_multiplier"]);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("problem JSON: ") + ex.what());
  }
}

std::pair<int, int> sample_count_range(int dim) {
  // [5, 30) at n = 40.
  const int lo = std::max(1, static_cast<int>(std::ceil(5.0 * dim / 40.0)));
  const int hi = std::max(lo + 1, static_cast<int>(std::ceil(30.0 * dim / 40.0)));
  return {lo, hi};
}

EqualityConstraint random_constraint(int dim, const Vector& x_feas, Rng& rng) {
  if (dim < 2) throw InputError("random_constraint: need dim >= 2");
  const int hi = std::min(dim - 1, std::max(2, dim / 4));
  const int lo = std::min(2, hi);
  std::uniform_int_distribution<int> rows_dist(lo, hi);
  const int m = rows_dist(rng);
  const Matrix g = random_normal(rng, dim, m);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ() * Matrix::Identity(dim, m);
  EqualityConstraint c{q.transpose(), Vector()};
  c.b = c.a * x_feas;
  return c;
}

SeparableProblem qp_family(int n_agents, int dim, CondRange cond, std::uint64_t seed,
                           bool constrained) {
  if (n_agents < 1) throw InputError("qp_family: need at least one agent");
  if (dim < 2) throw InputError("qp_family: dim must be >= 2");
  check_cond_range(cond);
  Rng rng(seed);
  const auto counts = draw_sample_counts(n_agents, dim, 1 << 20, rng);
  std::vector<Matrix> factors;
  factors.reserve(n_agents);
  for (int m : counts) factors.push_back(random_normal(rng, m, dim));
  condition_factors(factors, draw_condition(cond, rng));

  SeparableProblem p;
  p.family = Family::Qp;
  p.seed = seed;
  for (const auto& a : factors) {
    const Vector b = random_normal(rng, a.rows());
    p.locals.emplace_back(QpLocalData{a.transpose() * a, -(a.transpose() * b)});
  }
  if (constrained) p.constraint = random_constraint(dim, random_normal(rng, dim), rng);
  p.validate();
  attach_reference(p);
  return p;
}

SeparableProblem logreg_family(int n_agents, int dim, double xi, std::uint64_t seed,
                               std::optional<EqualityConstraint> constraint) {
  if (n_agents < 1) throw InputError("logreg_family: need at least one agent");
  if (dim < 1) throw InputError("logreg_family: dim must be positive");
  if (!(xi >= 0)) throw InputError("logreg_family: xi must be nonnegative");
  Rng rng(seed);
  const auto counts = draw_sample_counts(n_agents, dim, 1 << 20, rng);
  const Vector x_true = random_normal(rng, dim);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const double feature_scale = 1.0 / std::sqrt(static_cast<double>(dim));

  SeparableProblem p;
  p.family = Family::LogReg;
  p.seed = seed;
  p.xi = xi;
  for (int m : counts) {
    Matrix features = random_normal(rng, m, dim) * feature_scale;
    Vector labels(m);
    for (int k = 0; k < m; ++k)
      labels[k] = coin(rng) < logistic(features.row(k).dot(x_true)) ? 1.0 : -1.0;
    p.locals.emplace_back(LogRegLocalData{std::move(features), std::move(labels), xi / n_agents});
  }
  p.constraint = std::move(constraint);
  p.validate();
  attach_reference(p);
  return p;
}

SeparableProblem basis_pursuit_family(int n_agents, int dim, double xi, CondRange cond,
                                      std::uint64_t seed,
                                      std::optional<EqualityConstraint> constraint) {
  if (n_agents < 1) throw InputError("basis_pursuit_family: need at least one agent");
  if (dim < 2) throw InputError("basis_pursuit_family: dim must be >= 2");
  if (!(xi >= 0)) throw InputError("basis_pursuit_family: xi must be nonnegative");
  check_cond_range(cond);
  Rng rng(seed);
  // rank(A_i) < n for every agent.
  const auto counts = draw_sample_counts(n_agents, dim, dim - 1, rng);
  std::vector<Matrix> factors;
  for (int m : counts) factors.push_back(random_normal(rng, m, dim));
  condition_factors(factors, draw_condition(cond, rng));

  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::bernoulli_distribution flip(0.5);
  Vector x_true(dim);
  for (int k = 0; k < dim; ++k) x_true[k] = (flip(rng) ? -1.0 : 1.0) * magnitude(rng);

  SeparableProblem p;
  p.family = Family::BasisPursuit;
  p.seed = seed;
  p.xi = xi;
  for (auto& a : factors) {
    Vector b = a * x_true + 1e-2 * random_normal(rng, a.rows());
    p.locals.emplace_back(LeastSquaresL1Data{std::move(a), std::move(b), xi / n_agents});
  }
  p.constraint = constraint ? std::move(constraint) : random_constraint(dim, x_true, rng);
  p.validate();
  attach_reference(p);
  return p;
}

SeparableProblem generate_problem(const ProblemSpec& spec) {
  switch (spec.family) {
    case Family::Qp:
      return qp_family(spec.n_agents, spec.dim, spec.cond, spec.seed, spec.constrained);
    case Family::LogReg: {
      std::optional<EqualityConstraint> c;
      if (spec.constrained) {
        Rng rng(mix_seed(spec.seed, 0xC0157A));
        c = random_constraint(spec.dim, random_normal(rng, spec.dim), rng);
      }
      return logreg_family(spec.n_agents, spec.dim, spec.xi, spec.seed, std::move(c));
    }
    case Family::BasisPursuit:
      return basis_pursuit_family(spec.n_agents, spec.dim, spec.xi, spec.cond, spec.seed);
  }
  throw InputError("unknown family");
}

double stationarity_residual(const SeparableProblem& problem, const Vector& x,
                             const std::optional<Vector>& multiplier) {
  Vector r = problem.gradient(x);
  if (problem.constraint && multiplier) r += problem.constraint->a.transpose() * *multiplier;
  return r.norm();
}

namespace {

ReferenceResult solve_quadratic(const SeparableProblem& problem) {
  const int n = problem.dim();
  const Matrix h = problem.hessian(Vector::Zero(n));
  const Vector g0 = problem.gradient(Vector::Zero(n));
  ReferenceResult out;
  if (problem.constraint) {
    auto [x, beta] = dense_kkt(h, problem.constraint->a, -g0, problem.constraint->b);
    out.x = std::move(x);
    out.multiplier = std::move(beta);
  } else {
    Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() != Eigen::Success) throw FactorizationError("aggregate QP Hessian is singular");
    out.x = ldlt.solve(-g0);
    out.x += ldlt.solve(-(h * out.x + g0));
  }
  out.iterations = 1;
  out.residual = stationarity_residual(problem, out.x, out.multiplier);
  return out;
}

ReferenceResult solve_smooth_newton(const SeparableProblem& problem, double tol, int max_iters) {
  const int n = problem.dim();
  const auto* con = problem.constraint ? &*problem.constraint : nullptr;
  Vector x = Vector::Zero(n);
  if (con) x = con->a.transpose() * (con->a * con->a.transpose()).ldlt().solve(con->b);

  auto kkt_residual = [&](const Vector& at, Vector* beta) {
    const Vector g = problem.gradient(at);
    if (!con) return g.norm();
    *beta = least_squares_multiplier(con->a, g);
    return (g + con->a.transpose() * *beta).norm() + con->residual(at).norm();
  };

  ReferenceResult out;
  Vector beta;
  double best = kkt_residual(x, &beta);
  int stagnant = 0;
  for (int it = 0; it < max_iters && best > tol; ++it) {
    const Vector g = problem.gradient(x);
    const Matrix h = problem.hessian(x);
    Vector dx;
    if (con) {
      dx = dense_kkt(h, con->a, -g, -con->residual(x)).first;
    } else {
      dx = h.ldlt().solve(-g);
    }
    // Backtracking on the objective; feasible directions keep A x = b.
    const double f0 = problem.value(x);
    const double slope = g.dot(dx);
    double step = 1.0;
    for (int ls = 0; ls < 60; ++ls) {
      if (problem.value(x + step * dx) <= f0 + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    x += step * dx;
    const double res = kkt_residual(x, &beta);
    out.iterations = it + 1;
    if (res < best) {
      best = res;
      stagnant = 0;
    } else if (++stagnant >= 3) {
      break;
    }
  }
  out.x = x;
  if (con) out.multiplier = beta;
  out.residual = best;
  if (!(best <= std::max(tol, 1e-10)))
    throw ConvergenceError("reference Newton solve did not converge", best);
  return out;
}

ReferenceResult solve_basis_pursuit(const SeparableProblem& problem, double tol, int max_iters) {
  const int n = problem.dim();
  const Vector zero = Vector::Zero(n);
  const Matrix h = problem.hessian(zero);
  // Mean of the smooth gradients at 0 is -c; the l1 weight averages the same way.
  Vector c = Vector::Zero(n);
  double l1 = 0.0;
  for (const auto& f : problem.locals) {
    const auto& d = std::get<LeastSquaresL1Data>(f.data());
    c += d.a.transpose() * d.b;
    l1 += d.l1;
  }
  c /= problem.n_agents();
  l1 /= problem.n_agents();
  const auto* con = problem.constraint ? &*problem.constraint : nullptr;

  auto solve_with_signs = [&](const Vector& signs, Vector* beta) -> Vector {
    const Vector rhs = c - l1 * signs;
    if (con) {
      auto [x, b] = dense_kkt(h, con->a, rhs, con->b);
      *beta = b;
      return x;
    }
    return h.ldlt().solve(rhs);
  };

  ReferenceResult out;
  Vector beta;
  Vector signs = Vector::Zero(n);
  Vector x = solve_with_signs(signs, &beta);
  for (int it = 0; it < max_iters; ++it) {
    Vector next = x.unaryExpr([](double t) { return sign0(t); });
    out.iterations = it + 1;
    if (next == signs) break;
    signs = next;
    x = solve_with_signs(signs, &beta);
  }
  out.x = x;
  if (con) out.multiplier = beta;
  Vector r = h * x - c + l1 * x.unaryExpr([](double t) { return sign0(t); });
  if (con) r += con->a.transpose() * beta;
  out.residual = r.norm() + (con ? con->residual(x).norm() : 0.0);
  const bool signs_stable = (x.unaryExpr([](double t) { return sign0(t); }) == signs);
  if (!signs_stable || !(out.residual <= std::max(tol, 1e-10)))
    throw ConvergenceError("basis-pursuit reference sign pattern did not settle", out.residual);
  return out;
}

}  // namespace

ReferenceResult solve_reference(const SeparableProblem& problem, double tol, int max_iters) {
  problem.validate();
  switch (problem.family) {
    case Family::Qp: return solve_quadratic(problem);
    case Family::LogReg: return solve_smooth_newton(problem, tol, max_iters);
    case Family::BasisPursuit: return solve_basis_pursuit(problem, tol, max_iters);
  }
  throw InputError("unknown family");
}

void attach_reference(SeparableProblem& problem, double tol) {
  auto ref = solve_reference(problem, tol);
  problem.reference_solution = std::move(ref.x);
  problem.reference_multiplier = std::move(ref.multiplier);
}

double gradient_check(const LocalObjective& f, const Vector& x, double step) {
  const Vector g = f.gradient(x);
  Vector fd(x.size());
  Vector probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = step * std::max(1.0, std::abs(x[k]));
    probe[k] = x[k] + h;
    const double up = f.value(probe);
    probe[k] = x[k] - h;
    const double down = f.value(probe);
    probe[k] = x[k];
    fd[k] = (up - down) / (2 * h);
  }
  return (fd - g).norm() / std::max(1.0, g.norm());
}

}  // namespace dqnmesh
