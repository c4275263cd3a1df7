"""Communication block: IRS phases and user beamformers for fixed offloading.

The weighted sum-rate surrogate is handled with two fractional-programming
transforms. The Lagrangian dual transform (auxiliary ``alpha``) moves the SINR
out of the logarithm; the quadratic transform (auxiliary ``rho``) turns the
remaining ratios into

    h(x) - g(x),  h = sum 2 rho sqrt(alpha*) ||Hbar F||,  g = sum rho^2 Den_q

with ``Den_q`` the total received power at BS q plus noise. ``h`` is convex
in each block, so replacing it by its tangent gives a concave minorant
(majorization-minimization) that is maximized by projected gradient.

Gradients are "real" gradients, d/dRe + j d/dIm, so that a first-order change
along ``d`` is ``Re(vdot(g, d))``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .metrics import (InfeasibleDecision, effective_channel, sinr_scalar, stream_powers,
                      total_cost)

log = logging.getLogger(__name__)

TIE_RTOL = 1e-9
POWER_ITERS = 20


class ZeroRate(ValueError):
    pass


@dataclass
class FpState:
    lam: np.ndarray  # (Q, K) inverse rates
    beta: np.ndarray
    omega_star: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    alpha_star: np.ndarray
    rho: np.ndarray


@dataclass
class MmSubproblem:
    """``min sum_b x_b^H Q_b x_b + 2 Re(b_b^H x_b) - Re(g_b^H x_b)`` over unit balls or disks.

    ``x`` has shape (nb, d); ``kind`` is "ball" (each row has norm <= 1) or
    "disk" (each entry has modulus <= 1).
    """

    quad: np.ndarray  # (nb, d, d) Hermitian PSD
    lin: np.ndarray  # (nb, d)
    grad: np.ndarray  # (nb, d), gradient of h at the expansion point
    kind: str

    def value(self, x):
        qx = np.einsum("bij,bj->bi", self.quad, x)
        return float(np.real(np.vdot(x, qx)) + 2 * np.real(np.vdot(self.lin, x))
                     - np.real(np.vdot(self.grad, x)))

    def gradient(self, x):
        return 2 * np.einsum("bij,bj->bi", self.quad, x) + 2 * self.lin - self.grad

    def project(self, x):
        if self.kind == "ball":
            nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        else:
            nrm = np.abs(x)
        return x / np.maximum(nrm, 1.0)


# ---------------------------------------------------------------------------
# auxiliary variables

def _rates(hbar, F, noise_var):
    g = sinr_scalar(hbar, F, noise_var)
    return g, np.log1p(g)


def update_weights(dec, params, ch, hbar=None, prev=None, damping=1.0):
    """Return ``(lam, beta, omega_star)`` for the current rates.

    ``omega_star = d(cost)/d(lam) * lam**2`` is the weight of each link's rate
    in the first-order model of the cost; unused links get zero. ``prev``
    (an earlier triple) is blended in with weight ``1 - damping``.
    """
    p = params
    if hbar is None:
        hbar = effective_channel(ch, dec.phases)
    _, R = _rates(hbar, dec.beamformers, p.noise_var)
    ell = dec.offload
    active = ell > 0
    if np.any(active & (R <= 0)):
        q, k = np.argwhere(active & (R <= 0))[0]
        raise ZeroRate(f"link ({q}, {k}) carries an offload but has zero rate")
    lam = np.zeros_like(R)
    lam[active] = 1.0 / R[active]

    # which terms attain D_k = max(local, edge_1, ..., edge_Q)
    c = p.cycles_per_bit
    f = dec.edge_cpu
    edge = np.zeros_like(R)
    edge[active] = ell[active] * lam[active] / p.bandwidth + (ell * c[None, :])[active] / f[active]
    local = (p.task_bits - ell.sum(axis=0)) * c / p.local_cpu
    top = np.maximum(local, edge.max(axis=0))
    tol = TIE_RTOL * np.maximum(top, 1e-300)
    tied_edge = active & (edge >= top[None, :] - tol[None, :])
    n_tied = tied_edge.sum(axis=0) + (local >= top - tol)
    share = np.where(tied_edge, 1.0 / np.maximum(n_tied, 1)[None, :], 0.0)

    omega1 = p.user_weights[None, :] * ell / p.bandwidth * (p.tx_power + p.tradeoff * share)
    beta = omega1 * lam
    omega_star = lam * beta
    if prev is not None and damping != 1.0:
        lam0, beta0, om0 = prev
        beta = damping * beta + (1 - damping) * beta0
        omega_star = damping * omega_star + (1 - damping) * om0
    return lam, beta, omega_star


def update_alpha(gamma):
    gamma = np.asarray(gamma, float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be nonnegative")
    return gamma.copy()


def update_rho(alpha_star, hbar, F, noise_var):
    """Maximizer of ``2 rho sqrt(a*) ||y|| - rho^2 Den_q`` for every stream."""
    pw = stream_powers(hbar, F)
    q_ = pw.shape[0]
    signal = pw[np.arange(q_), np.arange(q_)]
    den = pw.sum(axis=(1, 2))[:, None] + noise_var
    return np.sqrt(np.maximum(alpha_star, 0.0)) * np.sqrt(signal) / den


def fp_state(dec, params, ch, hbar=None, prev=None, damping=1.0):
    if hbar is None:
        hbar = effective_channel(ch, dec.phases)
    lam, beta, om = update_weights(dec, params, ch, hbar, prev, damping)
    gamma = sinr_scalar(hbar, dec.beamformers, params.noise_var)
    alpha = update_alpha(gamma)
    alpha_star = om * (1 + alpha)
    rho = update_rho(alpha_star, hbar, dec.beamformers, params.noise_var)
    return FpState(lam, beta, om, gamma, alpha, alpha_star, rho)


# ---------------------------------------------------------------------------
# objectives

def dual_objective(omega_star, alpha, gamma):
    """Lagrangian-dual form of ``sum omega* ln(1 + gamma)``; exact at ``alpha = gamma``."""
    a_star = omega_star * (1 + alpha)
    return float(np.sum(omega_star * (np.log1p(alpha) - alpha) + a_star * gamma / (1 + gamma)))


def p4g_objective(rho, alpha_star, hbar, F, noise_var):
    """``h - g``: the block-dependent part of the quadratic-transform objective."""
    pw = stream_powers(hbar, F)
    q_ = pw.shape[0]
    signal = pw[np.arange(q_), np.arange(q_)]
    den = pw.sum(axis=(1, 2)) + noise_var
    h = np.sum(2 * rho * np.sqrt(np.maximum(alpha_star, 0.0)) * np.sqrt(signal))
    g = np.sum((rho ** 2).sum(axis=1) * den)
    return float(h - g)


def p4f_objective(state, hbar, F, noise_var):
    """Full quadratic-transform objective, constant terms included."""
    const = np.sum(state.omega_star * (np.log1p(state.alpha) - state.alpha))
    return float(const + p4g_objective(state.rho, state.alpha_star, hbar, F, noise_var))


# ---------------------------------------------------------------------------
# gradients and surrogate assembly

def _own_images(hbar, F):
    q_ = hbar.shape[0]
    return np.einsum("qkbu,qku->qkb", hbar[:q_], F)


def grad_h(block, rho, alpha_star, ch, F, coeffs):
    """Real gradient of ``h`` w.r.t. ``block`` ("F" or "theta"), other block fixed.

    Links whose received image is zero contribute nothing (a subgradient).
    """
    hbar = effective_channel(ch, coeffs=coeffs)
    y = _own_images(hbar, F)  # (Q, K, Nb)
    nrm = np.linalg.norm(y, axis=-1)
    w = 2 * rho * np.sqrt(np.maximum(alpha_star, 0.0))
    scale = np.where(nrm > 0, w / np.where(nrm > 0, nrm, 1.0), 0.0)
    q_ = hbar.shape[0]
    if block == "F":
        return scale[..., None] * np.einsum("qkbu,qkb->qku", hbar[:q_].conj(), y)
    if block == "theta":
        if coeffs.size == 0:
            return np.zeros(0, complex)
        u = np.einsum("kmu,qku->qkm", ch.user_to_irs, F)  # H_R,k F_qk
        z = np.einsum("qbm,qkb->qkm", ch.irs_to_bs.conj(), y)  # G_q^H y
        return np.einsum("qk,qkm->m", scale, u.conj() * z)
    raise ValueError(f"unknown block {block!r}")


def _surrogate_F(rho, grad, hbar):
    """Quadratic part per stream (i, j): ``sum_q P_q Hbar_qj^H Hbar_qj`` (same for all i)."""
    q_, k_, _, nu = hbar.shape
    P = (rho ** 2).sum(axis=1)  # (Q,)
    Mj = np.einsum("q,qjbu,qjbv->juv", P, hbar.conj(), hbar)  # (K, Nu, Nu)
    quad = np.broadcast_to(Mj, (q_, k_, nu, nu)).reshape(q_ * k_, nu, nu)
    return MmSubproblem(np.ascontiguousarray(quad), np.zeros((q_ * k_, nu), complex),
                        grad.reshape(q_ * k_, nu), "ball")


def _surrogate_theta(rho, grad, ch, F):
    """Quadratic and linear parts of ``g`` in the reflection coefficients."""
    P = (rho ** 2).sum(axis=1)
    u = np.einsum("jmu,iju->ijm", ch.user_to_irs, F)  # (Q_tx, K, M)
    a = np.einsum("qjbu,iju->qijb", ch.direct, F)  # direct images (Q, Q_tx, K, Nb)
    gram = np.einsum("qbm,qbn->qmn", ch.irs_to_bs.conj(), ch.irs_to_bs)  # G_q^H G_q
    uu = np.einsum("ijm,ijn->mn", u.conj(), u)
    quad = np.einsum("q,qmn->mn", P, gram) * uu
    ga = np.einsum("qbm,qijb->qijm", ch.irs_to_bs.conj(), a)
    lin = np.einsum("q,ijm,qijm->m", P, u.conj(), ga)
    return MmSubproblem(quad[None], lin[None], grad[None], "disk")


def _lipschitz(quad):
    """2 * largest eigenvalue over the batch, by power iteration."""
    nb, d, _ = quad.shape
    v = np.ones((nb, d), complex) / np.sqrt(d)
    lam = np.zeros(nb)
    for _ in range(POWER_ITERS):
        w = np.einsum("bij,bj->bi", quad, v)
        lam = np.linalg.norm(w, axis=-1)
        v = np.where(lam[:, None] > 0, w / np.where(lam > 0, lam, 1.0)[:, None], v)
    # Rayleigh quotient of the last iterate, never below the power estimate
    rq = np.real(np.einsum("bi,bij,bj->b", v.conj(), quad, v))
    return 2.0 * float(max(np.max(lam), np.max(rq), 0.0))


def solve_surrogate(sub, x0, max_iter=500, rtol=1e-8):
    """Accelerated projected gradient; returns the best iterate (never worse than ``x0``)."""
    x0 = sub.project(np.asarray(x0, complex))
    lip = _lipschitz(sub.quad)
    scale_g = np.max(np.abs(sub.gradient(x0)), initial=0.0)
    if lip <= 1e-14 * max(scale_g, 1e-300):
        # linear objective: push each block against its boundary
        d = sub.grad - 2 * sub.lin
        if sub.kind == "ball":
            nrm = np.linalg.norm(d, axis=-1, keepdims=True)
        else:
            nrm = np.abs(d)
        x = np.where(nrm > 0, d / np.where(nrm > 0, nrm, 1.0), x0)
        return x if sub.value(x) <= sub.value(x0) else x0
    step = 1.0 / lip
    best, best_val = x0, sub.value(x0)
    x_prev, z, t = x0, x0, 1.0
    prev_val = best_val
    for _ in range(max_iter):
        x = sub.project(z - step * sub.gradient(z))
        val = sub.value(x)
        if val < best_val:
            best, best_val = x, val
        if val > prev_val:
            # restart the momentum when the objective goes up
            z, t = best, 1.0
            x_prev = best
            prev_val = best_val
            continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = x + ((t - 1) / t_next) * (x - x_prev)
        converged = abs(prev_val - val) <= rtol * max(abs(val), 1e-300)
        x_prev, t, prev_val = x, t_next, val
        if converged:
            break
    return best


def mm_step(block, state, ch, F, coeffs):
    """One majorization-minimization step on ``block``; returns the new block."""
    grad = grad_h(block, state.rho, state.alpha_star, ch, F, coeffs)
    if block == "F":
        hbar = effective_channel(ch, coeffs=coeffs)
        sub = _surrogate_F(state.rho, grad, hbar)
        return solve_surrogate(sub, F.reshape(sub.lin.shape)).reshape(F.shape)
    if coeffs.size == 0:
        return coeffs.copy()
    sub = _surrogate_theta(state.rho, grad, ch, F)
    return solve_surrogate(sub, coeffs[None])[0]


def _mm_loop(block, state, ch, F, coeffs, noise_var, iters, rtol):
    def obj(F_, c_):
        return p4g_objective(state.rho, state.alpha_star, effective_channel(ch, coeffs=c_), F_,
                             noise_var)

    val = obj(F, coeffs)
    for _ in range(iters):
        new = mm_step(block, state, ch, F, coeffs)
        if block == "F":
            F_new, c_new = new, coeffs
        else:
            F_new, c_new = F, new
        new_val = obj(F_new, c_new)
        if new_val < val:
            break  # numerical noise only; the surrogate guarantees ascent
        F, coeffs = F_new, c_new
        done = new_val - val <= rtol * max(abs(new_val), 1e-300)
        val = new_val
        if done:
            break
    return F, coeffs


# ---------------------------------------------------------------------------
# driver

def unit_modulus(coeffs):
    """Phases of the relaxed coefficients in [0, 2 pi); zero coefficients map to 0."""
    th = np.where(np.abs(coeffs) > 0, np.angle(coeffs), 0.0)
    return np.mod(th, 2 * np.pi)


@dataclass
class CommTrace:
    costs: list = field(default_factory=list)  # cost after each round
    omega_star: list = field(default_factory=list)
    accepted: list = field(default_factory=list)  # step length taken (0 = rejected)


def _safe_cost(dec, ch, params):
    try:
        return total_cost(dec, ch, params).total
    except InfeasibleDecision:
        return np.inf


def damped_move(cur, cost, F_new, coeffs_new, ch, params, max_halvings=12, evaluate=None):
    """Step from ``cur`` toward the proposed block values, halving until the cost drops.

    The phases are snapped to unit modulus at every trial point. ``evaluate``
    maps a trial decision to ``(decision, cost)``; the default scores it as
    is. Returns ``(decision, cost, step)``; ``step`` is 0 when nothing improved.
    """
    F0 = cur.beamformers
    c0 = np.exp(1j * np.asarray(cur.phases, float))
    t = 1.0
    for _ in range(max_halvings + 1):
        F_t = F0 + t * (F_new - F0)
        c_t = c0 + t * (coeffs_new - c0)
        trial = cur.replace(beamformers=F_t, phases=unit_modulus(c_t))
        if evaluate is None:
            val = _safe_cost(trial, ch, params)
        else:
            trial, val = evaluate(trial)
        if val < cost:
            return trial, val, t
        t *= 0.5
    return cur, cost, 0.0


def solve_comm_subproblem(dec, ch, params, outer_iters=30, tol=1e-5, mm_iters=20,
                          mm_tol=1e-7, damping=1.0, blocks=("theta", "F"), evaluate=None):
    """Improve (F, theta) for fixed offloading; returns ``(decision, trace)``.

    Each round refreshes the FP auxiliaries, runs MM on the phases and then on
    the beamformers, and moves toward the result with a step that is halved
    until the system cost decreases (phases snapped to unit modulus). The cost
    is therefore non-increasing round by round. Leaving "theta" out of
    ``blocks`` keeps the phases frozen. ``evaluate`` (see :func:`damped_move`)
    lets a caller score trial points differently, e.g. after re-optimizing
    the offloading.
    """
    p = params
    trace = CommTrace()
    cur = dec.copy()
    cost = total_cost(cur, ch, p).total
    if not np.any(dec.offload > 0):
        return cur, trace
    prev_w = None
    for _ in range(outer_iters):
        F = cur.beamformers.astype(complex)
        coeffs = np.exp(1j * np.asarray(cur.phases, float))
        hbar = effective_channel(ch, coeffs=coeffs)
        state = fp_state(cur, p, ch, hbar, prev_w, damping)
        prev_w = (state.lam, state.beta, state.omega_star)
        trace.omega_star.append(state.omega_star.copy())
        for block in blocks:
            F, coeffs = _mm_loop(block, state, ch, F, coeffs, p.noise_var, mm_iters, mm_tol)
        nxt, new_cost, step = damped_move(cur, cost, F, coeffs, ch, p, evaluate=evaluate)
        trace.costs.append(new_cost)
        trace.accepted.append(step)
        if step == 0.0:
            break
        done = cost - new_cost < tol * max(1.0, abs(new_cost))
        cur, cost = nxt, new_cost
        if done:
            break
    log.debug("comm subproblem: %d rounds, cost %.6g", len(trace.costs), cost)
    return cur, trace
