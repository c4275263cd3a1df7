"""Small hand-built instances and independent reference computations."""

import itertools

import numpy as np

from irsmec.scenario import ChannelSet, SystemParams


def tiny_params(Q=1, K=1, M=0, nb=1, nu=1, **over):
    """Hand-sized system; defaults give the single-link textbook instance."""
    c = dict(
        bandwidth=1000.0, carrier_freq=2e9, noise_var=1.0, task_bits=1000.0, cycles_per_bit=1.0,
        local_cpu=1.0, edge_cpu_total=100.0, local_energy_per_cycle=1e-3,
        edge_energy_per_cycle=1e-4, tx_power=0.1, tradeoff=1.0, user_weight=1.0,
    )
    c.update(over)
    return SystemParams(
        num_cells=Q, num_users=K, irs_elements=M, bs_antennas=nb, user_antennas=nu,
        bs_positions=np.tile([[10.0, -100.0, 0.0]], (Q, 1)) + np.arange(Q)[:, None] * [0, 200, 0],
        irs_position=np.array([-10.0, 0.0, 1.0]),
        user_positions=np.zeros((K, 3)),
        bandwidth=c["bandwidth"], carrier_freq=c["carrier_freq"], noise_var=c["noise_var"],
        task_bits=np.full(K, c["task_bits"]), cycles_per_bit=np.full(K, c["cycles_per_bit"]),
        local_cpu=np.full(K, c["local_cpu"]), edge_cpu_total=np.full(Q, c["edge_cpu_total"]),
        local_energy_per_cycle=np.full(K, c["local_energy_per_cycle"]),
        edge_energy_per_cycle=np.full(Q, c["edge_energy_per_cycle"]),
        tx_power=np.full((Q, K), c["tx_power"]), tradeoff=c["tradeoff"],
        user_weights=np.full(K, c["user_weight"]),
    )


def scalar_link_channels(h=1.0, g=1.0, hr=1.0):
    """Q = K = M = 1, one antenna everywhere."""
    return ChannelSet(np.full((1, 1, 1, 1), h, complex), np.full((1, 1, 1), g, complex),
                      np.full((1, 1, 1), hr, complex))


def random_channels(rng, Q, K, M, nb, nu, scale=1.0):
    def cn(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return ChannelSet(cn(Q, K, nb, nu), cn(Q, nb, M), cn(K, M, nu))


def random_beamformers(rng, Q, K, nu):
    F = rng.standard_normal((Q, K, nu)) + 1j * rng.standard_normal((Q, K, nu))
    return F / np.linalg.norm(F, axis=-1, keepdims=True) * rng.uniform(0.2, 1.0, (Q, K, 1))


def cofactor_det(m):
    """Determinant by Laplace expansion along the first row."""
    n = m.shape[0]
    if n == 1:
        return m[0, 0]
    return sum((-1) ** j * m[0, j] * cofactor_det(np.delete(np.delete(m, 0, 0), j, 1))
               for j in range(n))


def brute_interference(hbar, F, noise_var, q, k):
    """Sum over every stream except (q, k), written out one term at a time."""
    Q, K = F.shape[:2]
    nb = hbar.shape[2]
    J = noise_var * np.eye(nb, dtype=complex)
    for i in range(Q):
        for j in range(K):
            if (i, j) == (q, k):
                continue
            v = hbar[q, j] @ F[i, j]
            J = J + np.outer(v, v.conj())
    return J


def vertex_enumeration(c, A, b, lb, ub):
    """Best vertex of {A x <= b, lb <= x <= ub} by trying every active set.

    Returns ``inf`` when no vertex is feasible.
    """
    n = c.size
    rows = np.vstack([A, np.eye(n), -np.eye(n)])
    rhs = np.concatenate([b, ub, -lb])
    combos = np.array(list(itertools.combinations(range(rows.shape[0]), n)))
    M = rows[combos]
    ok = np.abs(np.linalg.det(M)) > 1e-10
    x = np.linalg.solve(M[ok], rhs[combos[ok]][..., None])[..., 0]
    feas = np.all(x @ rows.T <= rhs + 1e-9 * (1 + np.abs(rhs)), axis=1)
    return float((x[feas] @ c).min()) if feas.any() else np.inf


def single_link_balance():
    """Closed-form optimum of the single-link textbook instance (B R = 1000 bit/s)."""
    # local time (1000 - l) equals edge time l/1000 + l/100 at the optimum
    ell = 1000.0 / 1.011
    d = 1000.0 - ell
    e = 1e-3 * (1000.0 - ell) + 1e-4 * ell + 0.1 * ell / 1000.0
    return ell, d, e, e + d


def scalar_rate_grid(points=721):
    """Max over (theta, |F|) of ln(1 + |1 + e^{j theta}|^2 |F|^2) on a grid."""
    th = np.linspace(0, 2 * np.pi, points)
    mag = np.linspace(0, 1, 201)
    T, A = np.meshgrid(th, mag)
    return float(np.max(np.log1p(np.abs(1 + np.exp(1j * T)) ** 2 * A ** 2)))
