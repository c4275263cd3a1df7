"""Physical-layer and computation model: rates, latency, energy, system cost.

Array conventions used throughout the package::

    hbar       (Q, K, N_BS, N_U)   effective channel user k -> BS q
    F          (Q, K, N_U)         beamformer of stream (q, k): user k -> BS q
    Y          (Q, Q, K, N_BS)     Y[q, i, j] = hbar[q, j] @ F[i, j], stream (i, j) seen at BS q

The interference seen by stream (q, k) at BS q is every other stream (i, j),
propagating through the channel of its own transmitter j.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import DimensionMismatch, hermitian, log_det_hpd


class InfeasibleDecision(ValueError):
    pass


@dataclass
class Decision:
    """One iterate of the four optimization blocks."""

    beamformers: np.ndarray  # (Q, K, N_U) complex
    phases: np.ndarray  # (M,) radians
    offload: np.ndarray  # (Q, K) bits
    edge_cpu: np.ndarray  # (Q, K) cycles/s

    def copy(self):
        return Decision(self.beamformers.copy(), self.phases.copy(),
                        self.offload.copy(), self.edge_cpu.copy())

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class CostBreakdown:
    rates: np.ndarray  # (Q, K) nat/s/Hz
    latency: np.ndarray  # (K,) s
    energy: np.ndarray  # (K,) J
    per_user: np.ndarray  # (K,) J
    total: float
    local_latency: np.ndarray = field(default=None)  # (K,)
    edge_latency: np.ndarray = field(default=None)  # (Q, K)

    @property
    def total_energy(self):
        return float(np.sum(self.energy))

    @property
    def total_latency(self):
        return float(np.sum(self.latency))


def reflection(phases):
    return np.exp(1j * np.asarray(phases, float))


def effective_channel(ch, phases=None, coeffs=None):
    """``H + G diag(coeffs) H_R`` for every (q, k).

    Pass either real ``phases`` or complex reflection ``coeffs`` (the relaxed
    variables, |coeff| <= 1).
    """
    m = ch.irs_to_bs.shape[-1]
    if coeffs is None:
        coeffs = reflection(phases if phases is not None else np.zeros(m))
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (m,):
        raise DimensionMismatch(f"expected {m} IRS coefficients, got {coeffs.shape}")
    if m == 0:
        return ch.direct.copy()
    cascade = np.einsum("qbm,m,kmu->qkbu", ch.irs_to_bs, coeffs, ch.user_to_irs)
    return ch.direct + cascade


def stream_images(hbar, F):
    """Received images ``Y[q, i, j] = hbar[q, j] @ F[i, j]``."""
    if hbar.shape[-1] != F.shape[-1] or hbar.shape[1] != F.shape[1]:
        raise DimensionMismatch(f"channels {hbar.shape} vs beamformers {F.shape}")
    return np.einsum("qjbu,iju->qijb", hbar, F)


def stream_powers(hbar, F):
    """``P[q, i, j] = ||hbar[q, j] F[i, j]||^2``."""
    y = stream_images(hbar, F)
    return np.sum(y.real ** 2 + y.imag ** 2, axis=-1)


def interference_cov(hbar, F, noise_var, q, k):
    """Interference-plus-noise covariance of stream (q, k) at BS q."""
    y = stream_images(hbar, F)[q]  # (Q_tx, K, N_BS)
    nb = y.shape[-1]
    mask = np.ones(y.shape[:2], bool)
    mask[q, k] = False
    v = y[mask]
    return v.T @ v.conj() + noise_var * np.eye(nb)


def interference_covs(hbar, F, noise_var):
    """All ``J[q, k]`` at once, shape (Q, K, N_BS, N_BS)."""
    y = stream_images(hbar, F)
    q_, _, k_, nb = y.shape
    outer = np.einsum("qijb,qijc->qijbc", y, y.conj())
    total = outer.sum(axis=(1, 2))
    own = outer[np.arange(q_), np.arange(q_)]  # (Q, K, nb, nb)
    return total[:, None] - own + noise_var * np.eye(nb)


def rate_logdet(hbar_qk, F_qk, J_qk):
    """``ln|I + H F F^H H^H J^-1|`` for one stream (or a batch of them)."""
    hbar_qk = np.asarray(hbar_qk)
    F_qk = np.asarray(F_qk)
    if F_qk.ndim == hbar_qk.ndim - 1:
        F_qk = F_qk[..., None]
    hf = hbar_qk @ F_qk
    # |I + S J^-1| = |J + S| / |J|
    return log_det_hpd(J_qk + hf @ hermitian(hf)) - log_det_hpd(J_qk)


def rates_logdet(hbar, F, noise_var):
    """Log-det rates of every stream, shape (Q, K)."""
    J = interference_covs(hbar, F, noise_var)
    q_ = hbar.shape[0]
    own = hbar[:q_] @ F[..., None]  # hbar[q, k] @ F[q, k]
    r = log_det_hpd(J + own @ hermitian(own)) - log_det_hpd(J)
    return np.maximum(r, 0.0)


def sinr_scalar(hbar, F, noise_var):
    """Power-ratio SINR ``gamma[q, k]`` (interference counted by received power)."""
    p = stream_powers(hbar, F)
    q_ = p.shape[0]
    total = p.sum(axis=(1, 2))
    signal = p[np.arange(q_), np.arange(q_)]  # (Q, K)
    interf = total[:, None] - signal
    return signal / (np.maximum(interf, 0.0) + noise_var)


def rate_scalar(hbar, F, noise_var, q=None, k=None):
    """Return ``(gamma, ln(1 + gamma))``; all streams unless (q, k) is given."""
    g = sinr_scalar(hbar, F, noise_var)
    if q is not None:
        g = g[q, k]
    return g, np.log1p(g)


def _edge_terms(offload, edge_cpu, rates, params):
    """Per-(q, k) edge latency and transmit time; zero where nothing is offloaded."""
    ell = np.asarray(offload, float)
    f = np.asarray(edge_cpu, float)
    R = np.asarray(rates, float)
    active = ell > 0
    bad = active & ((R <= 0) | (f <= 0))
    if np.any(bad):
        q, k = np.argwhere(bad)[0]
        raise InfeasibleDecision(f"offload on ({q}, {k}) with zero rate or zero edge CPU")
    c = params.cycles_per_bit[None, :]
    tx = np.zeros_like(ell)
    comp = np.zeros_like(ell)
    tx[active] = ell[active] / (params.bandwidth * R[active])
    comp[active] = (ell * c)[active] / f[active]
    return tx, comp


def local_latency(offload, params):
    rem = params.task_bits - np.sum(offload, axis=0)
    return rem * params.cycles_per_bit / params.local_cpu


def latency(offload, edge_cpu, rates, params, k=None):
    """``D_k = max(local time, max_q (transmit + edge compute))``."""
    tx, comp = _edge_terms(offload, edge_cpu, rates, params)
    d = np.maximum(local_latency(offload, params), np.max(tx + comp, axis=0))
    return d if k is None else float(d[k])


def energy(offload, rates, params, k=None):
    """Local compute + edge compute + transmit energy per user."""
    ell = np.asarray(offload, float)
    tx, _ = _edge_terms(ell, np.ones_like(ell), rates, params)
    c = params.cycles_per_bit
    rem = params.task_bits - ell.sum(axis=0)
    e = (c * params.local_energy_per_cycle * rem
         + c * np.sum(params.edge_energy_per_cycle[:, None] * ell, axis=0)
         + np.sum(params.tx_power * tx, axis=0))
    return e if k is None else float(e[k])


def cost_from_rates(offload, edge_cpu, rates, params):
    tx, comp = _edge_terms(offload, edge_cpu, rates, params)
    loc = local_latency(offload, params)
    d = np.maximum(loc, np.max(tx + comp, axis=0))
    e = energy(offload, rates, params)
    per_user = e + params.tradeoff * d
    total = float(np.sum(params.user_weights * per_user))
    return CostBreakdown(np.asarray(rates, float), d, e, per_user, total,
                         local_latency=loc, edge_latency=tx + comp)


def total_cost(dec, ch, params, hbar=None):
    """Weighted system cost of a decision, rates from the log-det formula."""
    if hbar is None:
        hbar = effective_channel(ch, dec.phases)
    rates = rates_logdet(hbar, dec.beamformers, params.noise_var)
    return cost_from_rates(dec.offload, dec.edge_cpu, rates, params)


def constraint_violations(dec, params, tol=1e-9):
    """Names of violated feasibility constraints (empty when feasible)."""
    errs = []
    norms = np.linalg.norm(dec.beamformers, axis=-1)
    if np.any(norms > 1 + tol):
        errs.append("beamformer norm > 1")
    th = np.asarray(dec.phases)
    if th.size and (np.any(th < -tol) or np.any(th >= 2 * np.pi + tol)):
        errs.append("phase outside [0, 2pi)")
    ell = dec.offload
    if np.any(ell < -tol * params.task_bits.max()):
        errs.append("negative offload")
    if np.any(ell.sum(axis=0) > params.task_bits * (1 + tol) + tol):
        errs.append("offload exceeds task size")
    f = dec.edge_cpu
    if np.any(f < -tol * params.edge_cpu_total.max()):
        errs.append("negative edge cpu")
    if np.any(f.sum(axis=1) > params.edge_cpu_total * (1 + tol) + tol):
        errs.append("edge cpu exceeds capacity")
    if np.any((ell > 0) & (f <= 0)):
        errs.append("offload without edge cpu")
    return errs
