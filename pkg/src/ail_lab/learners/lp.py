"""Exact l1 occupancy matching as a linear program over the flow polytope."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ..errors import SolverError
from ..mdp import NonStationaryPolicy, OccupancyMeasure, TabularMDP, policy_from_occupancy
from .simplex import simplex

# problems with more variables than this go to HiGHS under backend="auto"
DENSE_LIMIT = 1200


def _flow_constraints(mdp: TabularMDP):
    H, S, A = mdp.shape
    n = H * S * A
    rows, cols, vals = [], [], []
    idx = np.arange(n).reshape(H, S, A)
    for h in range(H):
        r = h * S + np.repeat(np.arange(S), A)
        rows.append(r)
        cols.append(idx[h].ravel())
        vals.append(np.ones(S * A))
        if h > 0:
            P = mdp.kernel(h - 1).reshape(S * A, S)
            src, dst = np.nonzero(P)
            rows.append(h * S + dst)
            cols.append(idx[h - 1].ravel()[src])
            vals.append(-P[src, dst])
    A_eq = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows),
                                                 np.concatenate(cols))),
                         shape=(H * S, n))
    b_eq = np.zeros(H * S)
    b_eq[:S] = mdp.initial_dist
    return A_eq, b_eq


def _build(mdp, d_hat):
    n = d_hat.size
    A_flow, b_flow = _flow_constraints(mdp)
    I = sp.identity(n, format="csr")
    # variables [d, u]; u >= d - d_hat and u >= d_hat - d
    A_ub = sp.vstack([sp.hstack([I, -I]), sp.hstack([-I, -I])]).tocsr()
    b_ub = np.concatenate([d_hat.ravel(), -d_hat.ravel()])
    A_eq = sp.hstack([A_flow, sp.csr_matrix((A_flow.shape[0], n))]).tocsr()
    c = np.concatenate([np.zeros(n), np.ones(n)])
    return c, A_eq, b_flow, A_ub, b_ub


def solve_matching_lp(mdp: TabularMDP, target, backend: str = "auto"):
    """Return the optimal occupancy (H, S, A) and the optimal l1 loss."""
    d_hat = target.dist if isinstance(target, OccupancyMeasure) else np.asarray(
        target, dtype=np.float64)
    if d_hat.shape != mdp.shape:
        raise SolverError("target shape does not match the MDP")
    c, A_eq, b_eq, A_ub, b_ub = _build(mdp, d_hat)
    n = d_hat.size
    if backend == "auto":
        backend = "simplex" if 2 * n <= DENSE_LIMIT else "highs"
    if backend == "simplex":
        res = simplex(c, A_eq.toarray(), b_eq, A_ub.toarray(), b_ub)
        x, fun = res.x, res.fun
    elif backend == "highs":
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=(0, None), method="highs")
        if res.status != 0:
            raise SolverError(f"HiGHS failed after {res.nit} iterations: {res.message}")
        x, fun = res.x, float(res.fun)
    else:
        raise SolverError(f"unknown LP backend {backend!r}")
    d = np.clip(x[:n], 0.0, None).reshape(d_hat.shape)
    return d, fun


def tvail_lp(mdp: TabularMDP, target, backend: str = "auto"):
    """Globally optimal l1 matching policy and its loss."""
    d, fun = solve_matching_lp(mdp, target, backend)
    return NonStationaryPolicy(policy_from_occupancy(d)), fun


def lp_optimum(mdp: TabularMDP, target, backend: str = "auto") -> float:
    return solve_matching_lp(mdp, target, backend)[1]
