"""Dense two-phase tableau simplex with Bland's anti-cycling rule."""

from dataclasses import dataclass

import numpy as np

from ..errors import SolverError


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int


def _pivot(tab, row, col):
    tab[row] /= tab[row, col]
    piv = tab[row].copy()
    factors = tab[:, col].copy()
    factors[row] = 0.0
    nz = np.flatnonzero(factors)
    tab[nz] -= np.outer(factors[nz], piv)


def _run(tab, basis, allowed, max_iter, tol, used):
    """Minimize the objective stored in the last tableau row."""
    m = tab.shape[0] - 1
    it = used
    while True:
        cost = tab[-1, :-1]
        cand = np.flatnonzero((cost < -tol) & allowed)
        if len(cand) == 0:
            return it
        if it >= max_iter:
            raise SolverError(f"simplex did not converge within {max_iter} pivots")
        col = cand[0]
        colv = tab[:m, col]
        pos = colv > tol
        if not pos.any():
            raise SolverError("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = ties[np.argmin(basis[ties])]
        _pivot(tab, row, col)
        basis[row] = col
        it += 1


def simplex(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, max_iter=100_000,
            tol=1e-9) -> LPResult:
    """Solve ``min c.x`` subject to equalities, inequalities and ``x >= 0``."""
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=np.float64)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=np.float64)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=np.float64)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=np.float64)
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq
    # standard form: [A_ub I; A_eq 0] [x; s] = b with b >= 0
    A = np.zeros((m, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    nv = n + m_ub
    tab = np.zeros((m + 1, nv + m + 1))
    tab[:m, :nv] = A
    tab[:m, nv:nv + m] = np.eye(m)
    tab[:m, -1] = b
    basis = np.arange(nv, nv + m)
    # phase 1 objective: sum of artificials, expressed in non-basic terms
    tab[-1, :nv] = -A.sum(0)
    tab[-1, -1] = -b.sum()
    allowed = np.ones(nv + m, bool)
    it = _run(tab, basis, allowed, max_iter, tol, 0)
    if -tab[-1, -1] > 1e-7 * max(1.0, b.sum()):
        raise SolverError("linear program is infeasible")
    # drive artificials out of the basis; drop redundant rows
    keep = np.ones(m + 1, bool)
    for r in range(m):
        if basis[r] >= nv:
            cols = np.flatnonzero(np.abs(tab[r, :nv]) > tol)
            if len(cols):
                _pivot(tab, r, cols[0])
                basis[r] = cols[0]
            else:
                keep[r] = False
    tab = tab[keep]
    basis = basis[keep[:-1]]
    tab = np.delete(tab, np.s_[nv:nv + m], axis=1)
    allowed = np.ones(nv, bool)
    full_c = np.zeros(nv)
    full_c[:n] = c
    tab[-1, :] = 0.0
    tab[-1, :nv] = full_c
    for r, j in enumerate(basis):
        if full_c[j] != 0.0:
            tab[-1] -= full_c[j] * tab[r]
    it = _run(tab, basis, allowed, max_iter, tol, it)
    x = np.zeros(nv)
    x[basis] = tab[:-1, -1]
    return LPResult(x[:n], float(c @ x[:n]), it)
