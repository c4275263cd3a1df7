"""Comparison algorithms: SA, BCD-SA, BCD-MSE (WMMSE), Rand-Phase and No-IRS."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .bcd import SolverTrace, _cost, initial_decision, mec_lookahead, run_bcd, run_bcd_fp_dc
from .irs import MmSubproblem, damped_move, solve_surrogate, unit_modulus, update_weights
from .linalg import solve_hpd
from .metrics import effective_channel, interference_cov, interference_covs, stream_images
from .scenario import _rng

log = logging.getLogger(__name__)

_TAG_SA = 21
_TAG_RAND_PHASE = 22


class DegenerateMse(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# simulated annealing

@dataclass
class SaConfig:
    initial_temp: float = None  # None: tuned so ~80% of the first proposals accept
    cooling: float = 0.95
    steps_per_temp: int = 20
    total_evals: int = 2000
    scale_theta: float = 0.3  # rad
    scale_F: float = 0.1
    scale_offload: float = 0.05  # fraction of the task size
    scale_cpu: float = 0.05  # fraction of the server capacity
    seed: int = 0
    blocks: tuple = ("theta", "F", "offload", "cpu")
    tune_samples: int = 100
    target_accept: float = 0.8

    def __post_init__(self):
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must lie in (0, 1)")
        if self.total_evals < 0:
            raise ValueError("total_evals must be nonnegative")


def _clamp_offload(ell, params):
    ell = np.maximum(ell, 0.0)
    tot = ell.sum(axis=0)
    over = tot > params.task_bits
    ell[:, over] *= params.task_bits[over] / tot[over]
    return ell


def _project_cpu(f, params):
    from .mec import _project_capacity
    return np.stack([_project_capacity(f[q], params.edge_cpu_total[q]) for q in range(params.Q)])


def _propose(dec, params, cfg, rng, usable):
    p = params
    new = dec.copy()
    if "theta" in cfg.blocks and p.M:
        new.phases = np.mod(dec.phases + cfg.scale_theta * rng.standard_normal(p.M), 2 * np.pi)
    if "F" in cfg.blocks:
        noise = rng.standard_normal(dec.beamformers.shape) + 1j * rng.standard_normal(dec.beamformers.shape)
        F = dec.beamformers + cfg.scale_F / np.sqrt(2) * noise
        new.beamformers = F / np.maximum(np.linalg.norm(F, axis=-1, keepdims=True), 1.0)
    if "offload" in cfg.blocks:
        ell = dec.offload + cfg.scale_offload * p.task_bits[None, :] * rng.standard_normal(dec.offload.shape)
        new.offload = np.where(usable, _clamp_offload(ell, p), 0.0)
    if "cpu" in cfg.blocks:
        f = dec.edge_cpu + cfg.scale_cpu * p.edge_cpu_total[:, None] * rng.standard_normal(dec.edge_cpu.shape)
        new.edge_cpu = _project_cpu(f, p)
    return new


def _sa_cost(dec, ch, params):
    cb = _cost(dec, ch, params)
    return np.inf if cb is None else cb.total


def sa_solve(params, ch, cfg=None, init=None):
    """Metropolis search over the joint decision; returns ``(best decision, trace)``.

    The trace rows record the best-ever cost after each temperature level.
    """
    cfg = cfg or SaConfig()
    p = params
    rng = _rng(cfg.seed, _TAG_SA)
    cur = init.copy() if init is not None else initial_decision(p, cfg.seed)
    cur_cost = _sa_cost(cur, ch, p)
    best, best_cost = cur.copy(), cur_cost
    trace = SolverTrace(initial_cost=cur_cost)
    if cfg.total_evals == 0:
        return best, trace
    usable = np.ones((p.Q, p.K), bool)
    evals = 0

    temp = cfg.initial_temp
    if temp is None:
        # uphill moves from the start point; pick T so that exp(-d/T) averages to the target
        ups = []
        for _ in range(min(cfg.tune_samples, cfg.total_evals)):
            d = _sa_cost(_propose(cur, p, cfg, rng, usable), ch, p) - cur_cost
            if np.isfinite(d) and d > 0:
                ups.append(d)
        if ups:
            ups = np.array(ups)
            lo, hi = 1e-12, max(ups.max(), 1e-12) * 1e3
            for _ in range(100):
                mid = np.sqrt(lo * hi)
                acc = (len(ups) * np.mean(np.exp(-ups / mid)) + 0.0) / len(ups)
                lo, hi = (mid, hi) if acc < cfg.target_accept else (lo, mid)
            temp = hi
        else:
            temp = 1e-12

    it = 0
    while evals < cfg.total_evals:
        for _ in range(cfg.steps_per_temp):
            if evals >= cfg.total_evals:
                break
            cand = _propose(cur, p, cfg, rng, usable)
            c = _sa_cost(cand, ch, p)
            evals += 1
            d = c - cur_cost
            if np.isfinite(c) and (d <= 0 or rng.random() < np.exp(-d / max(temp, 1e-300))):
                cur, cur_cost = cand, c
                if c < best_cost:
                    best, best_cost = cand.copy(), c
        it += 1
        cb = _cost(best, ch, p)
        trace.add(it, cb, 0.0)
        temp *= cfg.cooling
    return best, trace


def bcd_sa_solve(params, ch, cfg=None, N=60, eps=None, seed=0, **kw):
    """BCD with SA restricted to (F, theta) as the communication step."""
    cfg = cfg or SaConfig(seed=seed)
    comm_cfg = SaConfig(**{**cfg.__dict__, "blocks": ("theta", "F")})

    def comm(dec):
        return sa_solve(params, ch, comm_cfg, init=dec)[0]

    return run_bcd(params, ch, comm, N, eps, seed=seed, **kw)


# ---------------------------------------------------------------------------
# weighted MMSE

@dataclass
class WmmseState:
    U: np.ndarray  # (Q, K, N_BS)
    E: np.ndarray  # (Q, K)
    W: np.ndarray  # (Q, K)
    history: list = field(default_factory=list)


def wmmse_update_U(hbar, F, noise_var, q, k):
    """MMSE receiver ``(J + y y^H)^-1 y`` of stream (q, k)."""
    y = hbar[q, k] @ F[q, k]
    J = interference_cov(hbar, F, noise_var, q, k)
    return solve_hpd(J + np.outer(y, y.conj()), y)


def wmmse_update_WE(hbar, F, U, noise_var, q, k):
    """Mean-square error of stream (q, k) under receiver ``U`` and its weight ``1/E``."""
    y = hbar[q, k] @ F[q, k]
    J = interference_cov(hbar, F, noise_var, q, k)
    E = float(abs(1 - np.vdot(U, y)) ** 2 + np.real(np.vdot(U, J @ U)))
    if not E > 0:
        raise DegenerateMse(f"nonpositive MSE {E} on ({q}, {k})")
    return E, 1.0 / E


def _wmmse_state(hbar, F, noise_var):
    """All receivers, errors and weights at once."""
    J = interference_covs(hbar, F, noise_var)
    q_ = hbar.shape[0]
    y = np.einsum("qkbu,qku->qkb", hbar[:q_], F)
    T = J + np.einsum("qkb,qkc->qkbc", y, y.conj())
    U = solve_hpd(T, y)
    E = np.abs(1 - np.einsum("qkb,qkb->qk", U.conj(), y)) ** 2 + np.real(
        np.einsum("qkb,qkbc,qkc->qk", U.conj(), J, U))
    if np.any(E <= 0):
        raise DegenerateMse("nonpositive MSE")
    return WmmseState(U, E, 1.0 / E)


def _wmmse_F(st, c, hbar, F):
    """Beamformer update minimizing ``sum c_qk E_qk`` for fixed receivers."""
    q_, k_, nb, nu = hbar.shape
    # quadratic for stream (i, j): sum_q Hbar_qj^H (sum_k c_qk U_qk U_qk^H) Hbar_qj
    R = np.einsum("qk,qkb,qkc->qbc", c, st.U, st.U.conj())
    Mj = np.einsum("qjbu,qbc,qjcv->juv", hbar.conj(), R, hbar)
    quad = np.broadcast_to(Mj, (q_, k_, nu, nu)).reshape(q_ * k_, nu, nu)
    g = 2 * c[..., None] * np.einsum("qkbu,qkb->qku", hbar[:q_].conj(), st.U)
    sub = MmSubproblem(np.ascontiguousarray(quad), np.zeros((q_ * k_, nu), complex),
                       g.reshape(q_ * k_, nu), "ball")
    return solve_surrogate(sub, F.reshape(q_ * k_, nu)).reshape(F.shape)


def _wmmse_theta(st, c, ch, F, coeffs):
    """Reflection update minimizing ``sum c_qk E_qk`` for fixed receivers."""
    u = np.einsum("jmu,iju->ijm", ch.user_to_irs, F)  # (Q_tx, K, M)
    a = np.einsum("qjbu,iju->qijb", ch.direct, F)
    GU = np.einsum("qbm,qkb->qkm", ch.irs_to_bs.conj(), st.U)  # G_q^H U_qk
    V = np.einsum("qk,qkm,qkn->mn", c, GU, GU.conj())
    # V_q summed over q is fine because u does not depend on the receiving BS
    uu = np.einsum("ijm,ijn->mn", u.conj(), u)
    quad = V * uu
    Ua = np.einsum("qkb,qijb->qkij", st.U.conj(), a)
    lin = np.einsum("qk,ijm,qkm,qkij->m", c, u.conj(), GU, Ua)
    q_ = F.shape[0]
    own_u = u[np.arange(q_)[:, None], np.arange(F.shape[1])[None, :]]  # u_qk for stream (q, k)
    g = 2 * np.einsum("qk,qkm,qkm->m", c, own_u.conj(), GU)
    sub = MmSubproblem(quad[None], lin[None], g[None], "disk")
    return solve_surrogate(sub, coeffs[None])[0]


def wmmse_comm_step(dec, ch, params, iters=30, tol=1e-5, blocks=("theta", "F"), evaluate=None):
    """WMMSE rounds on (theta, F) with weights from the cost model; returns ``(dec, costs)``."""
    p = params
    cur = dec.copy()
    cb = _cost(cur, ch, p)
    cost = cb.total
    costs = []
    if not np.any(dec.offload > 0):
        return cur, costs
    for _ in range(iters):
        F = cur.beamformers.astype(complex)
        coeffs = np.exp(1j * np.asarray(cur.phases, float))
        hbar = effective_channel(ch, coeffs=coeffs)
        _, _, om = update_weights(cur, p, ch, hbar)
        if "theta" in blocks and coeffs.size:
            st = _wmmse_state(hbar, F, p.noise_var)
            coeffs = _wmmse_theta(st, om * st.W, ch, F, coeffs)
            hbar = effective_channel(ch, coeffs=coeffs)
        if "F" in blocks:
            st = _wmmse_state(hbar, F, p.noise_var)
            F = _wmmse_F(st, om * st.W, hbar, F)
        nxt, new_cost, step = damped_move(cur, cost, F, coeffs, ch, p, evaluate=evaluate)
        costs.append(new_cost)
        if step == 0.0:
            break
        done = cost - new_cost < tol * max(1.0, abs(new_cost))
        cur, cost = nxt, new_cost
        if done:
            break
    return cur, costs


def bcd_mse_solve(params, ch, N=60, eps=None, seed=0, comm_iters=30, **kw):
    def comm(dec):
        return wmmse_comm_step(dec, ch, params, comm_iters, evaluate=mec_lookahead(ch, params))[0]

    return run_bcd(params, ch, comm, N, eps, seed=seed, **kw)


# ---------------------------------------------------------------------------
# IRS baselines

def rand_phase_solve(params, ch, N=60, eps=None, seed=0, **kw):
    """BCD-FP-DC with the phases drawn once and frozen."""
    init = initial_decision(params, seed)
    init.phases = _rng(seed, _TAG_RAND_PHASE).uniform(0.0, 2 * np.pi, params.M)
    return run_bcd_fp_dc(params, ch, N, eps, seed=seed, blocks=("F",), init=init, **kw)


def no_irs_solve(params, ch, N=60, eps=None, seed=0, **kw):
    """BCD-FP-DC on the system with the IRS removed."""
    p0 = params.with_(irs_elements=0)
    init = initial_decision(p0, seed)
    return run_bcd_fp_dc(p0, ch.without_irs(), N, eps, seed=seed, blocks=("F",), init=init, **kw)
