#include "dqnmesh/harness.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace dqnmesh;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
CommGraph graph_of(const std::string& text) { return CommGraph::from_json(nlohmann::json::parse(text)); }

SeparableProblem problem_of(const std::string& text) {
  SeparableProblem p = SeparableProblem::from_json(nlohmann::json::parse(text));
  if (!p.reference_solution) attach_reference(p);
  return p;
}

const Matrix& matrix_of(const InverseHessianEstimate& e) { return e.c; }
const Matrix& matrix_of(const HessianEstimate& e) { return e.b; }

template <class Fn>
std::optional<Matrix> qn(Fn fn, const Matrix& m, const Vector& s, const Vector& y) {
  auto out = fn(m, CurvaturePair{s, y});
  if (!out) return std::nullopt;
  return matrix_of(*out);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "dqnmesh native core";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<FactorizationError>(m, "FactorizationError", PyExc_ArithmeticError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  m.def("random_connected_graph",
        [](int n, double kappa, std::uint64_t seed) {
          return random_connected_graph(n, kappa, seed).to_json().dump();
        },
        py::arg("n_agents"), py::arg("kappa"), py::arg("seed"));
  m.def("connectivity_ratio", [](const std::string& g) { return connectivity_ratio(graph_of(g)); });
  m.def("metropolis_weights",
        [](const std::string& g, double eps) {
          const MixingMatrix w = metropolis_weights(graph_of(g), eps);
          return py::make_tuple(w.w, w.lambda);
        },
        py::arg("graph"), py::arg("epsilon") = kDefaultMetropolisEpsilon);

  m.def("generate_problem",
        [](const std::string& family, int n_agents, int dim, double cond_lo, double cond_hi, double xi,
           bool constrained, std::uint64_t seed) {
          ProblemSpec spec;
          spec.family = parse_family(family);
          spec.n_agents = n_agents;
          spec.dim = dim;
          spec.cond = {cond_lo, cond_hi};
          spec.xi = xi;
          spec.constrained = constrained || spec.family == Family::BasisPursuit;
          spec.seed = seed;
          return generate_problem(spec).to_json().dump();
        },
        py::arg("family") = "qp", py::arg("n_agents") = 10, py::arg("dim") = 10, py::arg("cond_lo") = 2.1,
        py::arg("cond_hi") = 2.6, py::arg("xi") = 1e-2, py::arg("constrained") = false, py::arg("seed") = 0);
  m.def("problem_value", [](const std::string& p, const Vector& x) { return problem_of(p).value(x); });
  m.def("problem_gradient", [](const std::string& p, const Vector& x) { return problem_of(p).gradient(x); });

  m.def("run",
        [](const std::string& problem, const std::string& graph, const std::string& algo, double alpha,
           double c0, int max_iters, double tol, bool fusion, int threads, std::uint64_t init_seed) {
          const SeparableProblem p = problem_of(problem);
          const CommGraph g = graph_of(graph);
          RunConfig rc;
          rc.algo = parse_algorithm(algo);
          rc.c0 = c0;
          rc.max_iters = max_iters;
          rc.tol = tol;
          rc.fusion = fusion;
          rc.threads = threads;
          rc.init_seed = init_seed;
          RunTrace t;
          {
            py::gil_scoped_release release;
            if (alpha > 0) {
              rc.alpha = alpha;
              t = run_algorithm(p, g, rc);
            } else {
              t = golden_section_step(p, g, rc).trace;
            }
          }
          py::dict out;
          out["summary"] = trace_summary_json(t).dump();
          out["csv"] = trace_csv(t);
          out["final_x"] = Matrix(t.final_x);
          out["x_star"] = *p.reference_solution;
          return out;
        },
        py::arg("problem"), py::arg("graph"), py::arg("algo") = "dqn-bfgs", py::arg("alpha") = 0.1,
        py::arg("c0") = 0.1, py::arg("max_iters") = 1000, py::arg("tol") = 1e-10, py::arg("fusion") = true,
        py::arg("threads") = 1, py::arg("init_seed") = 0);

  m.def("sweep",
        [](const std::string& config, const std::string& out_dir) {
          const ExperimentConfig c = ExperimentConfig::from_json(nlohmann::json::parse(config));
          ExperimentResult r;
          {
            py::gil_scoped_release release;
            r = run_experiment(c);
            if (!out_dir.empty()) emit_report(r.table, r.cells, out_dir);
          }
          return py::make_tuple(r.table.to_json().dump(), r.any_aborted());
        },
        py::arg("config"), py::arg("out_dir") = "");
  m.def("validate_trace", [](const std::string& csv, const std::string& summary) {
    const ValidationReport v = validate_trace(csv, nlohmann::json::parse(summary));
    return py::make_tuple(v.ok, v.failures);
  });

  m.def("bfgs_inverse_update", [](const Matrix& c, const Vector& s, const Vector& y) {
    return qn([](const Matrix& mm, const CurvaturePair& p) { return bfgs_inverse_update({mm}, p); }, c, s, y);
  });
  m.def("dfp_inverse_update", [](const Matrix& c, const Vector& s, const Vector& y) {
    return qn([](const Matrix& mm, const CurvaturePair& p) { return dfp_inverse_update({mm}, p); }, c, s, y);
  });
  m.def("bfgs_hessian_update", [](const Matrix& b, const Vector& s, const Vector& y) {
    return qn([](const Matrix& mm, const CurvaturePair& p) { return bfgs_hessian_update({mm}, p); }, b, s, y);
  });
  m.def("dfp_hessian_update", [](const Matrix& b, const Vector& s, const Vector& y) {
    return qn([](const Matrix& mm, const CurvaturePair& p) { return dfp_hessian_update({mm}, p); }, b, s, y);
  });
  m.def("pd_safeguard", &pd_safeguard, py::arg("m"), py::arg("floor"), py::arg("ceiling") = py::none());

  m.def("kkt_solve",
        [](const Matrix& b, const Matrix& a, const Vector& rhs_stat, const Vector& rhs_prim) {
          const KktSystem sys{b, a, rhs_stat, rhs_prim};
          const KktSolution sol = kkt_solve(sys);
          return py::make_tuple(sol.delta_x, sol.beta, kkt_relative_residual(sys, sol));
        },
        py::arg("b"), py::arg("a"), py::arg("rhs_stat"), py::arg("rhs_prim"));
  m.def("safe_step_size", &safe_step_size, py::arg("lam"), py::arg("smoothness"), py::arg("gamma"),
        py::arg("n"), py::arg("n_agents"));
}
