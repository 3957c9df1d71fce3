"""Distributed quasi-Newton solvers over peer-to-peer networks."""

import json

import numpy as np

from . import _core
from ._core import (
    FactorizationError,
    InputError,
    bfgs_hessian_update,
    bfgs_inverse_update,
    dfp_hessian_update,
    dfp_inverse_update,
    kkt_solve,
    pd_safeguard,
    safe_step_size,
)

__all__ = [
    "FactorizationError",
    "InputError",
    "bfgs_hessian_update",
    "bfgs_inverse_update",
    "dfp_hessian_update",
    "dfp_inverse_update",
    "generate_problem",
    "kkt_solve",
    "metropolis_weights",
    "pd_safeguard",
    "random_graph",
    "run",
    "safe_step_size",
    "sweep",
]


def _text(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def random_graph(n_agents, kappa, seed=0):
    return json.loads(_core.random_connected_graph(n_agents, kappa, seed))


def metropolis_weights(graph, epsilon=0.01):
    w, lam = _core.metropolis_weights(_text(graph), epsilon)
    return np.asarray(w), lam


def generate_problem(family="qp", n_agents=10, dim=10, cond=(2.1, 2.6), xi=1e-2,
                     constrained=False, seed=0):
    return json.loads(_core.generate_problem(family, n_agents, dim, cond[0], cond[1], xi,
                                             constrained, seed))


def run(problem, graph, algo="dqn-bfgs", alpha=0.1, c0=0.1, max_iters=1000, tol=1e-10,
        fusion=True, threads=1, init_seed=0):
    """alpha=None picks the step by golden-section search."""
    out = _core.run(_text(problem), _text(graph), algo, -1.0 if alpha is None else alpha, c0,
                    max_iters, tol, fusion, threads, init_seed)
    out["summary"] = json.loads(out["summary"])
    return out


def sweep(config, out_dir=""):
    table, aborted = _core.sweep(_text(config), str(out_dir))
    return json.loads(table), aborted
