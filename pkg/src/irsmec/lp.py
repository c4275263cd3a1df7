"""Dense two-phase simplex for small box-bounded linear programs.

    minimize    c @ x
    subject to  A @ x <= b,   lb <= x <= ub   (all bounds finite)

Variables are shifted and scaled to the unit box before pivoting and every
row is normalized, which keeps the tableau well conditioned for the mixed
units (bits, cycles/s, seconds, joules) the branch-and-bound feeds it.
Pricing is Dantzig's rule with lowest-index tie-breaking; after a run of
degenerate pivots it switches to Bland's rule, so the method cannot cycle.
The leaving row comes from a two-pass ratio test that favours large pivots.
"""

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
HARRIS_TOL = 1e-10
DEGENERATE_STREAK = 30


class NumericalFailure(RuntimeError):
    pass


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, float).reshape(-1, n)
        self.b = np.asarray(self.b, float).ravel()
        self.lb = np.broadcast_to(np.asarray(self.lb, float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, float), (n,)).copy()
        if self.A.shape[0] != self.b.size:
            raise ValueError(f"A has {self.A.shape[0]} rows but b has {self.b.size}")
        if not (np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub))):
            raise ValueError("variable bounds must be finite")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self):
        return self.c.size


@dataclass
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray
    objective_value: float
    iterations: int = 0


def _choose_entering(cost_row, bland):
    if bland:
        idx = np.flatnonzero(cost_row < -OPT_TOL)
        return int(idx[0]) if idx.size else -1
    j = int(np.argmin(cost_row))  # argmin returns the lowest index among ties
    return j if cost_row[j] < -OPT_TOL else -1


def _choose_leaving(col, rhs, basis, bland=False):
    """Two-pass (Harris) ratio test.

    Pass one finds the smallest ratio with every right-hand side relaxed by
    HARRIS_TOL; pass two picks, among rows within that ratio, the largest
    pivot element (lowest basic index on ties). Large pivots keep the tableau
    from blowing up on nearly degenerate vertices. In Bland mode the plain
    minimum ratio with lowest basic index is used instead.
    """
    idx = np.flatnonzero(col > PIVOT_TOL)
    if idx.size == 0:
        return -1
    cp = col[idx]
    r = np.maximum(rhs[idx], 0.0)
    ratios = r / cp
    if bland:
        best = ratios.min()
        ties = idx[ratios <= best + 1e-12 * max(1.0, best)]
    else:
        theta = ((r + HARRIS_TOL) / cp).min()
        sel = ratios <= theta
        cand, cc = idx[sel], cp[sel]
        ties = cand[cc >= cc.max() * (1 - 1e-12)]
    if ties.size == 1:
        return int(ties[0])
    return int(ties[np.argmin(basis[ties])])


def _pivot(T, r, j):
    row = T[r]
    row /= row[j]
    col = T[:, j].copy()
    col[r] = 0.0
    nz = np.flatnonzero(col)
    T[nz] -= col[nz, None] * row
    # the relaxed ratio test leaves at most HARRIS_TOL-sized infeasibilities
    rhs = T[:-1, -1]
    rhs[(rhs < 0) & (rhs > -10 * HARRIS_TOL)] = 0.0


def _simplex(T, basis, ncols, max_iter):
    """Minimize the last row of tableau ``T`` over its first ``ncols`` columns."""
    streak = 0
    for it in range(max_iter):
        cost_row = T[-1, :ncols]
        bland = streak >= DEGENERATE_STREAK
        j = _choose_entering(cost_row, bland)
        if j < 0:
            return "optimal", it
        r = _choose_leaving(T[:-1, j], T[:-1, -1], basis, bland)
        if r < 0:
            return "unbounded", it
        streak = streak + 1 if T[r, -1] <= FEAS_TOL else 0
        _pivot(T, r, j)
        basis[r] = j
    raise NumericalFailure(f"simplex exceeded {max_iter} pivots")


def solve_lp(lp, max_iter=None):
    """Solve ``lp``; returns an :class:`LPSolution` with a basic optimal point.

    Raises :class:`NumericalFailure` if the pivot limit is hit.
    """
    n = lp.n
    width = lp.ub - lp.lb
    free = width > 0
    # fixed variables drop out; the rest live in the unit box
    A = lp.A[:, free] * width[free]
    b = lp.b - lp.A @ lp.lb
    c = lp.c[free] * width[free]
    nf = int(free.sum())

    rows = np.vstack([A, np.eye(nf)])
    rhs = np.concatenate([b, np.ones(nf)])
    scale = np.max(np.abs(rows), axis=1) if nf else np.zeros(rows.shape[0])
    empty = scale == 0
    if np.any(rhs[empty] < -FEAS_TOL * (1 + np.abs(lp.b).max(initial=0))):
        return LPSolution("infeasible", lp.lb.copy(), np.nan)
    rows = rows[~empty] / scale[~empty, None]
    rhs = rhs[~empty] / scale[~empty]
    m = rows.shape[0]

    neg = rhs < 0
    n_art = int(neg.sum())
    # columns: structural | slack | artificial | rhs
    T = np.zeros((m + 1, nf + m + n_art + 1))
    sign = np.where(neg, -1.0, 1.0)
    T[:m, :nf] = rows * sign[:, None]
    T[:m, nf:nf + m] = np.diag(sign)
    T[:m, -1] = rhs * sign
    basis = np.arange(nf, nf + m)
    art_rows = np.flatnonzero(neg)
    for a, r in enumerate(art_rows):
        T[r, nf + m + a] = 1.0
        basis[r] = nf + m + a
    if max_iter is None:
        max_iter = 50 * (m + nf + n_art) + 100
    iters = 0

    if n_art:
        # phase 1: minimize the sum of artificials
        T[-1, :] = 0.0
        T[-1, :-1] = -T[art_rows, :-1].sum(axis=0)
        T[-1, nf + m:nf + m + n_art] = 0.0
        T[-1, -1] = -T[art_rows, -1].sum()
        status, it = _simplex(T, basis, nf + m + n_art, max_iter)
        iters += it
        if -T[-1, -1] > FEAS_TOL * max(1.0, m):
            return LPSolution("infeasible", lp.lb.copy(), np.nan, iters)
        # drive any zero-level artificials out of the basis
        for r in range(m):
            if basis[r] >= nf + m:
                cand = np.flatnonzero(np.abs(T[r, :nf + m]) > 1e-9)
                if cand.size:
                    _pivot(T, r, int(cand[0]))
                    basis[r] = int(cand[0])
        keep = basis < nf + m
        T = np.vstack([T[:m][keep], T[-1:]])
        basis = basis[keep]
        T = np.hstack([T[:, :nf + m], T[:, -1:]])
        m = basis.size

    # phase 2
    T[-1, :] = 0.0
    T[-1, :nf] = c
    cb = np.zeros(m)
    struct = basis < nf
    cb[struct] = c[basis[struct]]
    T[-1, :-1] -= cb @ T[:m, :-1]
    T[-1, -1] = -(cb @ T[:m, -1])
    status, it = _simplex(T, basis, nf + m, max_iter)
    iters += it
    if status != "optimal":
        return LPSolution(status, lp.lb.copy(), -np.inf, iters)

    y = np.zeros(nf + m)
    y[basis] = T[:m, -1]
    x = lp.lb.copy()
    x[free] += width[free] * np.clip(y[:nf], 0.0, 1.0)
    x = np.clip(x, lp.lb, lp.ub)
    viol = lp.A @ x - lp.b
    if viol.size and np.any(viol > 1e-8 * (1 + np.abs(lp.b))):
        raise NumericalFailure(f"recovered point violates rows by {viol.max():.3e}")
    return LPSolution("optimal", x, float(lp.c @ x), iters)
