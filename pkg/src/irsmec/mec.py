"""MEC block: offloading volumes and edge CPU shares for fixed rates.

The max() terms of the cost are moved into epigraph variables (latency D_k,
energy E_k). Dividing the edge-latency bound by f would make it nonconvex in
a different way, so it is kept in bilinear form

    l f / (B R) - D f + c l <= 0

and solved by spatial branch-and-bound over McCormick LP relaxations.
Variable order in the model vector: l (Q*K), f (Q*K), D (K, omitted when the
latency weight is zero), E (K).
"""

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .lp import LinearProgram, solve_lp
from .metrics import cost_from_rates


class InvalidRates(ValueError):
    pass


class EmptyBox(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass
class BilinearConstraint:
    """``sum(coef * x[u] * x[v]) + row @ x + const <= 0``."""

    terms: list  # [(coef, pair_index)]
    row: np.ndarray
    const: float


@dataclass
class QcpModel:
    params: object
    rates: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    d: float
    A: np.ndarray
    b: np.ndarray
    bilinear: list
    pairs: list  # [(u, v)]
    idx_l: np.ndarray  # (Q, K)
    idx_f: np.ndarray  # (Q, K)
    idx_D: np.ndarray  # (K,) or empty
    idx_E: np.ndarray  # (K,)
    all_local_cost: float
    names: list = field(default_factory=list)

    @property
    def n(self):
        return self.c.size

    @property
    def has_latency(self):
        return self.idx_D.size > 0


@dataclass
class BnbNode:
    lb: np.ndarray
    ub: np.ndarray
    depth: int = 0
    bound: float = -np.inf
    x: np.ndarray = None  # relaxed point, model variables followed by w


@dataclass
class MecSolution:
    offload: np.ndarray
    edge_cpu: np.ndarray
    latency: np.ndarray
    energy: np.ndarray
    objective: float
    gap: float
    nodes_explored: int
    bound: float = -np.inf
    incumbent_history: list = field(default_factory=list)
    node_log: list = field(default_factory=list)  # (node bound, incumbent when explored)


def build_qcp(params, rates):
    """Assemble the epigraph QCP for fixed per-link rates (nat/s/Hz)."""
    p = params
    R = np.asarray(rates, float)
    if R.shape != (p.Q, p.K):
        raise InvalidRates(f"rates shape {R.shape} != ({p.Q}, {p.K})")
    if np.any(R < 0) or not np.all(np.isfinite(R)):
        raise InvalidRates("rates must be finite and nonnegative")
    Q, K = p.Q, p.K
    zeta = float(p.tradeoff)
    w = p.user_weights
    c = p.cycles_per_bit
    L = p.task_bits
    usable = R > 0
    inv_br = np.zeros_like(R)
    inv_br[usable] = 1.0 / (p.bandwidth * R[usable])

    idx_l = np.arange(Q * K).reshape(Q, K)
    idx_f = Q * K + idx_l
    nxt = 2 * Q * K
    if zeta > 0:
        idx_D = nxt + np.arange(K)
        nxt += K
    else:
        idx_D = np.zeros(0, int)
    idx_E = nxt + np.arange(K)
    n = nxt + K

    names = ([f"l[{q},{k}]" for q in range(Q) for k in range(K)]
             + [f"f[{q},{k}]" for q in range(Q) for k in range(K)]
             + [f"D[{k}]" for k in range(idx_D.size)]
             + [f"E[{k}]" for k in range(K)])

    local_energy = c * p.local_energy_per_cycle * L
    local_time = L * c / p.local_cpu
    all_local = float(np.sum(w * (local_energy + zeta * local_time)))

    lb = np.zeros(n)
    ub = np.zeros(n)
    ub[idx_l] = np.where(usable, L[None, :], 0.0)
    ub[idx_f] = np.repeat(p.edge_cpu_total[:, None], K, axis=1)
    per_bit_edge_energy = (c[None, :] * p.edge_energy_per_cycle[:, None]
                           + p.tx_power * inv_br)
    ub[idx_E] = local_energy + np.sum(np.where(usable, per_bit_edge_energy, 0.0), axis=0) * L
    if zeta > 0:
        ub[idx_D] = all_local / (zeta * w)

    obj = np.zeros(n)
    obj[idx_E] = w
    if zeta > 0:
        obj[idx_D] = zeta * w

    rows, rhs = [], []
    for k in range(K):
        # energy epigraph
        r = np.zeros(n)
        r[idx_l[:, k]] = per_bit_edge_energy[:, k] - c[k] * p.local_energy_per_cycle[k]
        r[idx_E[k]] = -1.0
        rows.append(r)
        rhs.append(-local_energy[k])
        if zeta > 0:
            # local-latency epigraph
            r = np.zeros(n)
            r[idx_D[k]] = -1.0
            r[idx_l[:, k]] = -c[k] / p.local_cpu[k]
            rows.append(r)
            rhs.append(-local_time[k])
        r = np.zeros(n)
        r[idx_l[:, k]] = 1.0
        rows.append(r)
        rhs.append(L[k])
    for q in range(Q):
        r = np.zeros(n)
        r[idx_f[q]] = 1.0
        rows.append(r)
        rhs.append(p.edge_cpu_total[q])

    pairs, bilinear = [], []
    if zeta > 0:
        for q in range(Q):
            for k in range(K):
                if not usable[q, k]:
                    continue
                lf = len(pairs)
                pairs.append((idx_l[q, k], idx_f[q, k]))
                df = len(pairs)
                pairs.append((idx_D[k], idx_f[q, k]))
                row = np.zeros(n)
                row[idx_l[q, k]] = c[k]
                bilinear.append(BilinearConstraint([(inv_br[q, k], lf), (-1.0, df)], row, 0.0))

    return QcpModel(p, R, lb, ub, obj, 0.0, np.array(rows), np.array(rhs), bilinear, pairs,
                    idx_l, idx_f, idx_D, idx_E, all_local, names)


def mccormick_relax(model, node):
    """LP relaxation on the node box; auxiliary ``w_p`` follow the model variables."""
    lo, hi = node.lb, node.ub
    if np.any(lo > hi):
        bad = int(np.flatnonzero(lo > hi)[0])
        raise EmptyBox(f"empty box on {model.names[bad] if model.names else bad}")
    n, npair = model.n, len(model.pairs)
    N = n + npair
    rows = [np.hstack([model.A, np.zeros((model.A.shape[0], npair))])]
    rhs = [model.b]
    wl = np.zeros(npair)
    wu = np.zeros(npair)
    if npair:
        env = np.zeros((4 * npair, N))
        env_rhs = np.zeros(4 * npair)
        for p, (u, v) in enumerate(model.pairs):
            uL, uU, vL, vU = lo[u], hi[u], lo[v], hi[v]
            r = 4 * p
            # w >= uL v + vL u - uL vL ; w >= uU v + vU u - uU vU
            env[r, [u, v, n + p]] = [vL, uL, -1.0]
            env_rhs[r] = uL * vL
            env[r + 1, [u, v, n + p]] = [vU, uU, -1.0]
            env_rhs[r + 1] = uU * vU
            # w <= uU v + vL u - uU vL ; w <= uL v + vU u - uL vU
            env[r + 2, [u, v, n + p]] = [-vL, -uU, 1.0]
            env_rhs[r + 2] = -uU * vL
            env[r + 3, [u, v, n + p]] = [-vU, -uL, 1.0]
            env_rhs[r + 3] = -uL * vU
            corners = (uL * vL, uL * vU, uU * vL, uU * vU)
            wl[p], wu[p] = min(corners), max(corners)
        rows.append(env)
        rhs.append(env_rhs)
        bil = np.zeros((len(model.bilinear), N))
        bil_rhs = np.zeros(len(model.bilinear))
        for i, con in enumerate(model.bilinear):
            bil[i, :n] = con.row
            for coef, p in con.terms:
                bil[i, n + p] += coef
            bil_rhs[i] = -con.const
        rows.append(bil)
        rhs.append(bil_rhs)
    c = np.concatenate([model.c, np.zeros(npair)])
    return LinearProgram(c, np.vstack(rows), np.concatenate(rhs),
                         np.concatenate([lo, wl]), np.concatenate([hi, wu]))


def _project_capacity(f, cap):
    """Euclidean projection of ``f`` onto {f >= 0, sum f <= cap}."""
    f = np.maximum(np.asarray(f, float), 0.0)
    if f.sum() <= cap:
        return f
    # projection onto the simplex sum = cap
    srt = np.sort(f)[::-1]
    css = np.cumsum(srt) - cap
    ks = np.arange(1, f.size + 1)
    rho = np.flatnonzero(srt - css / ks > 0)[-1]
    tau = css[rho] / (rho + 1)
    out = np.maximum(f - tau, 0.0)
    # land exactly on the capacity
    return out * (cap / out.sum()) if out.sum() > 0 else out


def _fixed_f_lp(model, f):
    """LP over (l, D, E) with the edge CPU shares pinned to ``f`` (Q, K)."""
    p = model.params
    lo = model.lb.copy()
    hi = model.ub.copy()
    lo[model.idx_f] = f
    hi[model.idx_f] = f
    rows = [model.A]
    rhs = [model.b]
    if model.bilinear:
        extra = np.zeros((len(model.bilinear), model.n))
        for i, con in enumerate(model.bilinear):
            extra[i] = con.row
            for coef, pi in con.terms:
                u, v = model.pairs[pi]
                # v is always an f variable: coef * x_u * f_v becomes linear in x_u
                extra[i, u] += coef * f.ravel()[v - model.idx_f.flat[0]]
        rows.append(extra)
        rhs.append(np.zeros(len(model.bilinear)))
    lp = LinearProgram(model.c, np.vstack(rows), np.concatenate(rhs), lo, hi)
    if not model.has_latency:
        # without a latency term an offload needs only some CPU
        lp.ub[model.idx_l] = np.where(f > 0, model.ub[model.idx_l], 0.0)
    return lp


def all_local_point(model):
    p = model.params
    x = np.zeros(model.n)
    x[model.idx_f] = np.repeat((p.edge_cpu_total / p.K)[:, None], p.K, axis=1)
    x[model.idx_E] = p.cycles_per_bit * p.local_energy_per_cycle * p.task_bits
    if model.has_latency:
        x[model.idx_D] = p.task_bits * p.cycles_per_bit / p.local_cpu
    return x


def true_objective(model, x):
    """Exact weighted cost of the (l, f) part of ``x``."""
    ell, f = _split(model, x)
    return cost_from_rates(ell, f, model.rates, model.params).total


def _split(model, x):
    ell = np.maximum(x[model.idx_l], 0.0)
    ell[ell < 1e-9 * model.params.task_bits.max()] = 0.0
    f = np.maximum(x[model.idx_f], 0.0)
    return ell, f


def _exact_point(model, ell, f):
    """Model vector with epigraph variables set to their tight values."""
    if not model.has_latency:
        ell, f = _fill_capacity(model, ell, f)
    cb = cost_from_rates(ell, f, model.rates, model.params)
    x = np.zeros(model.n)
    x[model.idx_l] = ell
    x[model.idx_f] = f
    x[model.idx_E] = cb.energy
    if model.has_latency:
        x[model.idx_D] = cb.latency
    return x, cb.total


def feasibility_heuristic(model, relaxed_x):
    """Pin f to the (capacity-projected) relaxed shares, then solve the LP in (l, D, E).

    Returns ``(x, objective)``; falls back to the all-local point when the
    pinned LP cannot be solved.
    """
    p = model.params
    f = np.asarray(relaxed_x)[model.idx_f].copy()
    if not model.has_latency:
        # the model is already an LP; CPU shares are filled afterwards
        sol = solve_lp(LinearProgram(model.c, model.A, model.b, model.lb, model.ub))
        return _exact_point(model, *_split(model, sol.x))
    for q in range(p.Q):
        f[q] = _project_capacity(f[q], p.edge_cpu_total[q])
    sol = solve_lp(_fixed_f_lp(model, f))
    if sol.status != "optimal":
        x = all_local_point(model)
        return x, true_objective(model, x)
    ell, _ = _split(model, sol.x)
    return _exact_point(model, ell, f)


def _rel_gap(obj, bound):
    return (obj - bound) / max(1.0, abs(obj))


def _branch_choice(model, node, root_width):
    """Pair with the largest normalized McCormick violation; split its wider side."""
    n = model.n
    x = node.x
    best, best_p = 0.0, -1
    for p, (u, v) in enumerate(model.pairs):
        scale = root_width[u] * root_width[v]
        if scale <= 0:
            continue
        viol = abs(x[n + p] - x[u] * x[v]) / scale
        if viol > best:
            best, best_p = viol, p
    if best_p < 0 or best < 1e-12:
        return None
    u, v = model.pairs[best_p]
    wu = (node.ub[u] - node.lb[u]) / root_width[u]
    wv = (node.ub[v] - node.lb[v]) / root_width[v]
    return u if wu >= wv else v


def _user_bounds(model):
    """Per-user lower bounds ``(cost, energy, latency)`` valid for every feasible point.

    The cost bound gives every user each server's whole capacity; the
    latency bound serves the task locally and at every server in parallel.
    """
    p = model.params
    R = model.rates
    cost = np.array([_user_min_cost(p, R, k, p.edge_cpu_total[None, :])[0]
                     for k in range(p.K)])
    c = p.cycles_per_bit
    a = np.where(R > 0, 1.0 / (p.bandwidth * np.where(R > 0, R, 1.0)), np.inf)
    slope = (c[None, :] * p.edge_energy_per_cycle[:, None] + p.tx_power * a
             - c[None, :] * p.local_energy_per_cycle[None, :])
    slope = np.where(R > 0, slope, 0.0)
    energy = c * p.local_energy_per_cycle * p.task_bits + p.task_bits * np.minimum(slope.min(axis=0), 0.0)
    speed = p.local_cpu / c + np.sum(1.0 / (a + c[None, :] / p.edge_cpu_total[:, None]), axis=0)
    return cost, energy, p.task_bits / speed


def _tighten_latency(model, lo, hi, incumbent, user_lb=None):
    """Shrink the D box: any improving point has zeta w_k D_k <= incumbent - (others' lower bounds)."""
    if model.has_latency:
        p = model.params
        w = p.user_weights
        if user_lb is None:
            cap = incumbent / (p.tradeoff * w)
        else:
            cost, energy, dmin = user_lb
            others = np.sum(w * cost) - w * cost
            cap = (incumbent - others - w * energy) / (p.tradeoff * w)
            lo[model.idx_D] = np.maximum(lo[model.idx_D], dmin)
        hi[model.idx_D] = np.minimum(hi[model.idx_D], cap)
        hi[model.idx_D] = np.maximum(hi[model.idx_D], lo[model.idx_D])


def _propagate(model, lo, hi, rounds=4):
    """Feasibility-based bound tightening on a node box; False if the box is empty.

    Uses, per usable link, ``D >= a l + c l / f`` read in each direction,
    the local-latency bound ``D >= s (L - sum_q l)`` and the two capacity sums.
    """
    if not model.has_latency:
        return bool(np.all(lo <= hi))
    p = model.params
    R = model.rates
    usable = R > 0
    a = np.where(usable, 1.0 / (p.bandwidth * np.where(usable, R, 1.0)), 0.0)
    c = p.cycles_per_bit
    s0 = c / p.local_cpu
    L = p.task_bits
    il, jf, jd = model.idx_l, model.idx_f, model.idx_D
    cap = p.edge_cpu_total
    for _ in range(rounds):
        lL, lU, fL, fU = lo[il], hi[il], lo[jf], hi[jf]
        dL, dU = lo[jd], hi[jd]
        # offload ceilings: latency with the most CPU, and the task size
        reach = np.where(usable, dU[None, :] * fU / (c[None, :] + a * fU), 0.0)
        lU = np.minimum(lU, reach)
        lU = np.minimum(lU, L[None, :] - (lL.sum(axis=0)[None, :] - lL))
        # the local part must finish by D_U
        need = L - dU / s0
        lL = np.maximum(lL, need[None, :] - (lU.sum(axis=0)[None, :] - lU))
        # CPU floor for the offload floor
        slack = dU[None, :] - a * lL
        if np.any((lL > 0) & (slack <= 0)):
            return False
        fL = np.maximum(fL, np.where(lL > 0, c[None, :] * lL / np.where(slack > 0, slack, 1.0), 0.0))
        fU = np.minimum(fU, cap[:, None] - (fL.sum(axis=1)[:, None] - fL))
        # latency floors
        edge = np.where(lL > 0, a * lL + c[None, :] * lL / np.where(fU > 0, fU, 1.0), 0.0)
        if np.any((lL > 0) & (fU <= 0)):
            return False
        dL = np.maximum(dL, np.max(edge, axis=0))
        dL = np.maximum(dL, s0 * (L - lU.sum(axis=0)))
        lo[il], hi[il], lo[jf], hi[jf], lo[jd] = lL, lU, fL, fU, dL
        if np.any(lo > hi + 1e-9 * (1 + np.abs(hi))):
            return False
        hi[:] = np.maximum(hi, lo)
    return True


def _sqrt_shares(model, ell):
    """CPU split minimizing the weighted edge compute time for fixed offloads."""
    p = model.params
    need = np.sqrt(p.user_weights * p.cycles_per_bit * np.maximum(ell, 0.0))
    f = np.zeros_like(need)
    for q in range(p.Q):
        if need[q].sum() > 0:
            f[q] = need[q] / need[q].sum() * p.edge_cpu_total[q]
    return f


def _polish(model, x, val, rounds=3):
    """Alternate the fixed-f LP with the square-root CPU split while it helps."""
    for _ in range(rounds):
        ell, _ = _split(model, x)
        if not np.any(ell > 0):
            break
        f = _sqrt_shares(model, ell)
        cx, cval = feasibility_heuristic(model, _with_f(model, x, f))
        if cval >= val - 1e-12 * max(1.0, abs(val)):
            break
        x, val = cx, cval
    return x, val


def local_solve(model, x0, max_iter=100):
    """Local NLP polish of a feasible point with SLSQP; returns ``(x, objective)``.

    The result is cleaned through :func:`feasibility_heuristic` so it is
    exactly feasible, and it is only kept when its true cost is lower.
    """
    x0 = np.asarray(x0, float)
    base = true_objective(model, x0)
    if not model.bilinear:
        return x0, base
    n = model.n
    span = np.where(model.ub > model.lb, model.ub - model.lb, 1.0)
    # work in unit-box coordinates; the raw variables span many decades
    lo, A, b = model.lb, model.A * span, model.b - model.A @ model.lb
    pairs = np.array(model.pairs)

    def unscale(y):
        return lo + span * y

    def bil(y):
        x = unscale(y)
        out = np.empty(len(model.bilinear))
        for i, con in enumerate(model.bilinear):
            out[i] = -(con.row @ x + con.const + sum(cf * x[pairs[p, 0]] * x[pairs[p, 1]]
                                                      for cf, p in con.terms))
        return out

    def bil_jac(y):
        x = unscale(y)
        J = np.zeros((len(model.bilinear), n))
        for i, con in enumerate(model.bilinear):
            J[i] = -con.row
            for cf, p in con.terms:
                u, v = pairs[p]
                J[i, u] -= cf * x[v]
                J[i, v] -= cf * x[u]
        return J * span

    cons = [{"type": "ineq", "fun": lambda y: b - A @ y, "jac": lambda y: -A},
            {"type": "ineq", "fun": bil, "jac": bil_jac}]
    cs = model.c * span
    y0 = np.clip((x0 - lo) / span, 0.0, 1.0)
    try:
        res = minimize(lambda y: cs @ y, y0, jac=lambda y: cs, method="SLSQP",
                       bounds=[(0.0, 1.0)] * n, constraints=cons,
                       options={"maxiter": max_iter, "ftol": 1e-12})
    except (ValueError, np.linalg.LinAlgError):
        return x0, base
    x, val = feasibility_heuristic(model, unscale(np.clip(res.x, 0.0, 1.0)))
    if val < base:
        return _polish(model, x, val)
    return x0, base


def _with_f(model, x, f):
    x = np.array(x, float)
    x[model.idx_f] = f
    return x


def _relax(model, node):
    sol = solve_lp(mccormick_relax(model, node))
    if sol.status != "optimal":
        return False
    node.x = sol.x
    node.bound = sol.objective_value + model.d
    return True


def spatial_bnb(model, rel_gap=1e-4, node_budget=10000, warm_start=None):
    """Best-first spatial branch-and-bound on the McCormick relaxations.

    ``warm_start`` is an optional ``(offload, edge_cpu)`` pair that seeds the
    incumbent alongside the all-local point.
    """
    p = model.params
    x0 = all_local_point(model)
    inc_x, inc = x0, true_objective(model, x0)
    history = [inc]
    if warm_start is not None:
        ell0 = np.where(model.ub[model.idx_l] > 0, np.asarray(warm_start[0], float), 0.0)
        cand_x, cand = _exact_point(model, ell0, np.asarray(warm_start[1], float))
        if cand < inc:
            inc_x, inc = cand_x, cand
            history.append(inc)
        hx, hval = feasibility_heuristic(model, cand_x)
        if hval < inc:
            inc_x, inc = hx, hval
            history.append(inc)

    hx, hval = local_solve(model, inc_x)
    if hval < inc:
        inc_x, inc = hx, hval
        history.append(inc)
    user_lb = _user_bounds(model) if model.has_latency else None
    root = BnbNode(model.lb.copy(), model.ub.copy())
    _tighten_latency(model, root.lb, root.ub, inc, user_lb)
    _propagate(model, root.lb, root.ub)
    root_width = root.ub - root.lb
    node_log = []
    closed_bound = np.inf  # smallest bound among nodes discarded by the gap test
    heap = []
    counter = itertools.count()
    if _relax(model, root):
        heapq.heappush(heap, (root.bound, next(counter), root))
    explored = 0
    while heap:
        bound = heap[0][0]
        if _rel_gap(inc, min(bound, closed_bound)) <= rel_gap or explored >= node_budget:
            break
        _, _, node = heapq.heappop(heap)
        explored += 1
        node_log.append((node.bound, inc))
        hx, hval = feasibility_heuristic(model, node.x)
        if hval < inc - 1e-12:
            hx, hval = local_solve(model, *_polish(model, hx, hval)[:1])
            inc_x, inc = hx, hval
            history.append(inc)
        if _rel_gap(inc, node.bound) <= rel_gap:
            closed_bound = min(closed_bound, node.bound)
            continue
        var = _branch_choice(model, node, root_width)
        if var is None:
            # relaxation exact on this box: its point is feasible
            cx, cval = _exact_point(model, *_split(model, node.x))
            if cval < inc:
                inc_x, inc = cx, cval
                history.append(inc)
            closed_bound = min(closed_bound, max(node.bound, min(cval, inc)))
            continue
        mid = 0.5 * (node.lb[var] + node.ub[var])
        for side in (0, 1):
            lo, hi = node.lb.copy(), node.ub.copy()
            if side == 0:
                hi[var] = mid
            else:
                lo[var] = mid
            _tighten_latency(model, lo, hi, inc, user_lb)
            if not _propagate(model, lo, hi):
                continue
            child = BnbNode(lo, hi, node.depth + 1)
            if not _relax(model, child):
                continue
            child.bound = max(child.bound, node.bound)
            if _rel_gap(inc, child.bound) <= rel_gap:
                closed_bound = min(closed_bound, child.bound)
                continue
            heapq.heappush(heap, (child.bound, next(counter), child))

    best_bound = min([h[0] for h in heap] + [closed_bound, inc])
    ell, f = _split(model, inc_x)
    ell, f = _fill_capacity(model, ell, f)
    x, obj = _exact_point(model, ell, f)
    if obj > inc:
        # capacity fill never hurts; guard against rounding only
        ell, f = _split(model, inc_x)
        x, obj = _exact_point(model, ell, f)
    return MecSolution(ell, f, x[model.idx_D] if model.has_latency else
                       cost_from_rates(ell, f, model.rates, p).latency,
                       x[model.idx_E], obj, max(0.0, _rel_gap(obj, best_bound)), explored,
                       best_bound, history, node_log)


def _fill_capacity(model, ell, f):
    """Give each server's whole capacity to its active links, keeping proportions."""
    p = model.params
    f = f.copy()
    for q in range(p.Q):
        active = ell[q] > 0
        if not active.any():
            continue
        share = np.where(active, f[q], 0.0)
        if share.sum() <= 0:
            share = active.astype(float)
        f[q] = share / share.sum() * p.edge_cpu_total[q]
    return ell, f


def reoptimize(params, rates, offload, edge_cpu):
    """Quick MEC re-solve: exact offloading for the given CPU shares, then polish.

    Returns ``(offload, edge_cpu, objective)``; never worse than the input
    pair when that pair is feasible for ``rates``.
    """
    model = build_qcp(params, rates)
    ell0 = np.where(model.ub[model.idx_l] > 0, np.asarray(offload, float), 0.0)
    x0, v0 = _exact_point(model, ell0, np.asarray(edge_cpu, float))
    x, val = feasibility_heuristic(model, x0)
    if val < v0:
        x, val = _polish(model, x, val)
    else:
        x, val = x0, v0
    ell, f = _split(model, x)
    return ell, f, val


def solve_mec(params, rates, rel_gap=1e-4, node_budget=10000, warm_start=None):
    return spatial_bnb(build_qcp(params, rates), rel_gap, node_budget, warm_start)


# ---------------------------------------------------------------------------
# independent oracle

def _user_min_cost(params, rates, k, f):
    """Exact minimum over l[:, k] of user k's cost for a batch of CPU shares.

    For fixed shares the cost is convex piecewise linear in l, so the minimum
    sits on a vertex of the arrangement formed by the box faces and the lines
    where two latency terms are equal. ``f`` has shape (batch, Q).
    """
    p = params
    Q = p.Q
    L = p.task_bits[k]
    c = p.cycles_per_bit[k]
    s0 = c / p.local_cpu[k]
    R = rates[:, k]
    usable = (R > 0)[None, :] & (f > 0)
    a = np.where(R > 0, 1.0 / (p.bandwidth * np.where(R > 0, R, 1.0)), 0.0)
    e = np.where(usable, a[None, :] + c / np.where(f > 0, f, 1.0), 0.0)  # (batch, Q)
    g = c * p.edge_energy_per_cycle + p.tx_power[:, k] * a - c * p.local_energy_per_cycle[k]
    nb = f.shape[0]

    # each line: coeffs (batch, Q) and rhs (batch,)
    lines = []
    for q in range(Q):
        coef = np.zeros((nb, Q))
        coef[:, q] = 1.0
        lines.append((coef, np.zeros(nb)))
    lines.append((np.ones((nb, Q)), np.full(nb, L)))
    for q in range(Q):
        coef = np.full((nb, Q), s0)
        coef[:, q] += e[:, q]
        lines.append((coef, np.full(nb, s0 * L)))
    for q, r in itertools.combinations(range(Q), 2):
        coef = np.zeros((nb, Q))
        coef[:, q] = e[:, q]
        coef[:, r] = -e[:, r]
        lines.append((coef, np.zeros(nb)))

    cands = []
    for combo in itertools.combinations(range(len(lines)), Q):
        Amat = np.stack([lines[i][0] for i in combo], axis=1)  # (batch, Q, Q)
        rhs = np.stack([lines[i][1] for i in combo], axis=1)
        det = np.linalg.det(Amat)
        ok = np.abs(det) > 1e-14 * np.max(np.abs(Amat), axis=(1, 2)) ** Q
        sol = np.full((nb, Q), np.nan)
        if ok.any():
            sol[ok] = np.linalg.solve(Amat[ok], rhs[ok][..., None])[..., 0]
        cands.append(sol)
    pts = np.stack(cands, axis=1)  # (batch, ncand, Q)
    tol = 1e-9 * L
    feas = (np.all(pts >= -tol, axis=-1) & (pts.sum(-1) <= L + tol)
            & np.all((pts <= tol) | usable[:, None, :], axis=-1))
    pts = np.clip(pts, 0.0, L)
    pts = np.where(usable[:, None, :], pts, 0.0)
    local = s0 * (L - pts.sum(-1))
    edge = np.max(e[:, None, :] * pts, axis=-1)
    cost = (c * p.local_energy_per_cycle[k] * L + pts @ g
            + p.tradeoff * np.maximum(local, edge)) * p.user_weights[k]
    cost = np.where(feas, cost, np.inf)
    return cost.min(axis=1)


def oracle_grid(params, rates, grid_points=200, refine_rounds=4):
    """Reference optimum of the MEC subproblem for K <= 2, Q <= 2.

    Edge CPU splits are scanned on a grid (each server's capacity is fully
    handed out, which never hurts), the best split is refined by coordinate
    golden-section search, and each user's offloading is solved exactly for
    the split at hand.
    """
    p = params
    if p.K > 2 or p.Q > 2:
        raise TooLarge(f"oracle supports K <= 2 and Q <= 2, got K={p.K}, Q={p.Q}")
    R = np.asarray(rates, float)
    if np.any(R < 0):
        raise InvalidRates("rates must be nonnegative")
    cap = p.edge_cpu_total

    def total(ts):
        ts = np.atleast_2d(ts)  # (batch, Q) share of user 0 at each server
        out = np.zeros(ts.shape[0])
        for k in range(p.K):
            share = ts if k == 0 else 1.0 - ts
            out += _user_min_cost(p, R, k, share * cap[None, :])
        return out

    if p.K == 1:
        return float(total(np.ones((1, p.Q)))[0])

    grid = np.linspace(0.0, 1.0, grid_points)
    mesh = np.stack(np.meshgrid(*([grid] * p.Q), indexing="ij"), axis=-1).reshape(-1, p.Q)
    vals = total(mesh)
    best = mesh[np.argmin(vals)].copy()
    best_val = float(vals.min())
    h = 1.0 / (grid_points - 1)
    invphi = (math.sqrt(5) - 1) / 2
    for _ in range(refine_rounds):
        for q in range(p.Q):
            lo, hi = max(0.0, best[q] - h), min(1.0, best[q] + h)

            def f1(t):
                pt = best.copy()
                pt[q] = t
                return float(total(pt)[0])

            a, b = lo, hi
            c1, c2 = b - invphi * (b - a), a + invphi * (b - a)
            v1, v2 = f1(c1), f1(c2)
            for _ in range(40):
                if v1 <= v2:
                    b, c2, v2 = c2, c1, v1
                    c1 = b - invphi * (b - a)
                    v1 = f1(c1)
                else:
                    a, c1, v1 = c1, c2, v2
                    c2 = a + invphi * (b - a)
                    v2 = f1(c2)
            t = c1 if v1 <= v2 else c2
            val = min(v1, v2)
            if val < best_val:
                best_val = val
                best[q] = t
        h *= 0.5
    return best_val
