"""Small dense two-phase simplex.

Solves ``min c·x  s.t.  A_ub·x <= b_ub, A_eq·x = b_eq, lb <= x <= ub`` with
finite lower bounds. Bland's rule keeps degenerate problems from cycling,
which matters for dispatch problems where many constraints are tight at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleLP, UnboundedLP

TOL = 1e-9


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int


def _pivot(t, basis, r, j):
    t[r] /= t[r, j]
    col = t[:, j].copy()
    col[r] = 0.0
    t -= np.outer(col, t[r])
    basis[r] = j


def _simplex(t, basis, n_cols, tol, max_iter, allowed):
    """Run Bland-rule pivots on tableau ``t`` (objective in the last row)."""
    it = 0
    m = t.shape[0] - 1
    while True:
        reduced = t[-1, :n_cols]
        candidates = np.flatnonzero((reduced < -tol) & allowed)
        if candidates.size == 0:
            return it
        j = int(candidates[0])
        col = t[:m, j]
        pos = col > tol
        if not pos.any():
            raise UnboundedLP("objective is unbounded below")
        ratios = np.full(m, np.inf)
        ratios[pos] = t[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        r = int(min(ties, key=lambda k: basis[k]))
        _pivot(t, basis, r, j)
        it += 1
        if it > max_iter:
            raise RuntimeError("simplex iteration limit reached")


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
            tol: float = TOL, max_iter: int = 50_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    if bounds is None:
        lb, ub = np.zeros(n), np.full(n, np.inf)
    else:
        lb = np.array([0.0 if b[0] is None else b[0] for b in bounds], dtype=float)
        ub = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
    if not np.all(np.isfinite(lb)):
        raise ValueError("lower bounds must be finite")
    if np.any(ub < lb - tol):
        raise InfeasibleLP("a variable has upper bound below its lower bound")

    # shift to y = x - lb >= 0 and append finite upper bounds as rows
    finite_ub = np.flatnonzero(np.isfinite(ub))
    rows_ub = np.vstack([A_ub, np.eye(n)[finite_ub]]) if finite_ub.size else A_ub
    rhs_ub = np.concatenate([b_ub - A_ub @ lb, (ub - lb)[finite_ub]])
    rhs_eq = b_eq - A_eq @ lb
    m_ub, m_eq = rows_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    slack_sign = np.where(rhs_ub >= 0, 1.0, -1.0)
    needs_art = np.concatenate([rhs_ub < 0, np.ones(m_eq, dtype=bool)])
    n_art = int(needs_art.sum())
    n_cols = n + m_ub + n_art

    t = np.zeros((m + 1, n_cols + 1))
    basis = np.zeros(m, dtype=int)
    art_col = n + m_ub
    for i in range(m_ub):
        s = slack_sign[i]
        t[i, :n] = rows_ub[i] * s
        t[i, n + i] = s
        t[i, -1] = rhs_ub[i] * s
        if needs_art[i]:
            t[i, art_col] = 1.0
            basis[i] = art_col
            art_col += 1
        else:
            basis[i] = n + i
    for k in range(m_eq):
        i = m_ub + k
        s = 1.0 if rhs_eq[k] >= 0 else -1.0
        t[i, :n] = A_eq[k] * s
        t[i, -1] = rhs_eq[k] * s
        t[i, art_col] = 1.0
        basis[i] = art_col
        art_col += 1

    iterations = 0
    is_art = np.zeros(n_cols, dtype=bool)
    is_art[n + m_ub:] = True
    if n_art:
        t[-1, :] = 0.0
        for i in range(m):
            if is_art[basis[i]]:
                t[-1, :] -= t[i, :]
        t[-1, :n_cols][is_art] = 0.0
        iterations += _simplex(t, basis, n_cols, tol, max_iter, np.ones(n_cols, dtype=bool))
        infeas = -t[-1, -1]
        if infeas > 1e-8 * max(1.0, np.abs(t[:m, -1]).max(initial=0.0)):
            raise InfeasibleLP(f"no feasible point (phase-1 residual {infeas:.3g})")
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if is_art[basis[i]]:
                row = t[i, :n_cols].copy()
                row[is_art] = 0.0
                j = np.flatnonzero(np.abs(row) > tol)
                if j.size:
                    _pivot(t, basis, i, int(j[0]))
                else:
                    keep[i] = False
        if not keep.all():
            keep_rows = np.concatenate([keep, [True]])
            t = t[keep_rows]
            basis = basis[keep]
            m = int(keep.sum())

    # phase 2
    t[-1, :] = 0.0
    t[-1, :n] = c
    for i in range(m):
        cb = t[-1, basis[i]]
        if cb != 0.0:
            t[-1, :] -= cb * t[i, :]
    allowed = ~is_art
    iterations += _simplex(t, basis, n_cols, tol, max_iter, allowed)

    y = np.zeros(n_cols)
    y[basis] = t[:m, -1]
    x = lb + y[:n]
    return LPResult(x=x, fun=float(c @ x), iterations=iterations)
