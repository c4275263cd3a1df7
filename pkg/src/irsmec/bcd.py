"""Block-coordinate descent driver shared by the BCD-type algorithms.

One outer pass solves the MEC block (offloading and edge CPU) by spatial
branch-and-bound at the current rates, then hands the decision to a
communication step. Both steps are guarded so the system cost never goes up.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .irs import solve_comm_subproblem
from .mec import reoptimize, solve_mec
from .metrics import Decision, InfeasibleDecision, effective_channel, rates_logdet, total_cost
from .scenario import _rng

log = logging.getLogger(__name__)

_TAG_INIT_F = 11
_TAG_INIT_THETA = 12


@dataclass
class SolverTrace:
    """Per-pass records; ``rows`` hold (iteration, cost, energy, latency, wallclock_s)."""

    initial_cost: float = np.nan
    rows: list = field(default_factory=list)
    mec_gaps: list = field(default_factory=list)

    def add(self, it, cb, wall):
        self.rows.append((it, cb.total, cb.total_energy, cb.total_latency, wall))

    @property
    def costs(self):
        return np.array([r[1] for r in self.rows])

    @property
    def iterations(self):
        return len(self.rows)

    def final(self):
        return self.rows[-1] if self.rows else None


def random_beamformers(shape, rng):
    """Uniform draws from the unit ball of C^n, one per leading index."""
    *lead, n = shape
    z = rng.standard_normal((*lead, n)) + 1j * rng.standard_normal((*lead, n))
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    radius = rng.random(tuple(lead)) ** (1.0 / (2 * n))
    return z * radius[..., None]


def initial_decision(params, seed):
    """Random beamformers and phases, equal offloading and CPU splits.

    Each block has its own random stream, so the beamformers are the same
    with or without an IRS.
    """
    p = params
    F = random_beamformers((p.Q, p.K, p.user_antennas), _rng(seed, _TAG_INIT_F))
    theta = _rng(seed, _TAG_INIT_THETA).uniform(0.0, 2 * np.pi, p.M)
    ell = np.repeat((p.task_bits / (2 * p.Q))[None, :], p.Q, axis=0)
    f = np.repeat((p.edge_cpu_total / p.K)[:, None], p.K, axis=1)
    return Decision(F, theta, ell, f)


def _cost(dec, ch, params):
    try:
        return total_cost(dec, ch, params)
    except InfeasibleDecision:
        return None


def mec_step(dec, ch, params, rel_gap=1e-3, node_budget=30):
    """Re-solve offloading and CPU shares at the current rates (warm-started)."""
    rates = rates_logdet(effective_channel(ch, dec.phases), dec.beamformers, params.noise_var)
    sol = solve_mec(params, rates, rel_gap=rel_gap, node_budget=node_budget,
                    warm_start=(np.where(rates > 0, dec.offload, 0.0), dec.edge_cpu))
    return dec.replace(offload=sol.offload, edge_cpu=sol.edge_cpu), sol


def mec_lookahead(ch, params):
    """Scorer for communication trial points that re-optimizes the offloading.

    At an exact MEC solution every user's latency terms are balanced, so with
    the offloading held fixed almost no beamforming change can lower the
    cost; letting the offloading follow the rates removes that kink.
    """

    def evaluate(trial):
        try:
            rates = rates_logdet(effective_channel(ch, trial.phases), trial.beamformers,
                                 params.noise_var)
            ell, f, val = reoptimize(params, rates, np.where(rates > 0, trial.offload, 0.0),
                                     trial.edge_cpu)
        except InfeasibleDecision:
            return trial, np.inf
        return trial.replace(offload=ell, edge_cpu=f), val

    return evaluate


def run_bcd(params, ch, comm_step, outer_iters=60, tol=None, init=None, seed=0,
            mec_rel_gap=1e-3, mec_node_budget=30):
    """Alternate the MEC block and ``comm_step(dec) -> dec``.

    Stops when a pass improves the cost by less than ``tol`` (default 1e-4 of
    the initial cost) or after ``outer_iters`` passes. Returns ``(decision, trace)``.
    """
    dec = init.copy() if init is not None else initial_decision(params, seed)
    cb = _cost(dec, ch, params)
    if cb is None:
        raise InfeasibleDecision("initial decision offloads over a zero-rate link")
    trace = SolverTrace(initial_cost=cb.total)
    if tol is None:
        tol = 1e-4 * abs(cb.total)
    t0 = time.perf_counter()
    prev = cb.total
    for it in range(1, outer_iters + 1):
        cand, sol = mec_step(dec, ch, params, mec_rel_gap, mec_node_budget)
        trace.mec_gaps.append(sol.gap)
        cand_cb = _cost(cand, ch, params)
        if cand_cb is not None and cand_cb.total <= cb.total:
            dec, cb = cand, cand_cb
        cand = comm_step(dec)
        cand_cb = _cost(cand, ch, params)
        if cand_cb is not None and cand_cb.total <= cb.total:
            dec, cb = cand, cand_cb
        trace.add(it, cb, time.perf_counter() - t0)
        log.debug("pass %d: cost %.8g", it, cb.total)
        if prev - cb.total < tol:
            break
        prev = cb.total
    return dec, trace


def run_bcd_fp_dc(params, ch, N=60, eps=None, seed=0, comm_iters=30, blocks=("theta", "F"),
                  **kw):
    """BCD with the FP/MM communication solver."""

    def comm(dec):
        return solve_comm_subproblem(dec, ch, params, outer_iters=comm_iters, blocks=blocks,
                                     evaluate=mec_lookahead(ch, params))[0]

    return run_bcd(params, ch, comm, N, eps, seed=seed, **kw)
