"""System constants and random channel synthesis.

Geometry follows the two-cell layout: BSs at (10, -100, 0) and (10, 100, 0),
the IRS at (-10, 0, 1), users dropped in a 20 m disk around the midpoint of
the two BSs. Channels are Rician with distance-based path loss; every random
draw comes from a ``SeedSequence`` keyed by (seed, link family, indices) so a
user's channels do not change when more users or IRS elements are added.
"""

from dataclasses import dataclass, field, replace

import numpy as np

BS_POSITIONS = ((10.0, -100.0, 0.0), (10.0, 100.0, 0.0))
IRS_POSITION = (-10.0, 0.0, 1.0)
USER_DISK_RADIUS = 20.0

# link-family tags for the keyed random streams
_TAG_USER_POS = 1
_TAG_DIRECT = 2
_TAG_IRS_BS = 3
_TAG_USER_IRS = 4

# array axes (unit vectors) for the ULA steering responses
_BS_AXIS = np.array([1.0, 0.0, 0.0])
_USER_AXIS = np.array([1.0, 0.0, 0.0])
_IRS_AXIS = np.array([0.0, 1.0, 0.0])


class InvalidParams(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class SystemParams:
    """All scenario constants.

    Per-user arrays have length K, per-BS arrays length Q, ``tx_power`` is
    (Q, K). ``irs_elements == 0`` is the no-IRS configuration.
    """

    num_cells: int
    num_users: int
    irs_elements: int
    bs_antennas: int
    user_antennas: int
    bs_positions: np.ndarray
    irs_position: np.ndarray
    user_positions: np.ndarray
    bandwidth: float
    carrier_freq: float
    noise_var: float
    task_bits: np.ndarray
    cycles_per_bit: np.ndarray
    local_cpu: np.ndarray
    edge_cpu_total: np.ndarray
    local_energy_per_cycle: np.ndarray
    edge_energy_per_cycle: np.ndarray
    tx_power: np.ndarray
    tradeoff: float
    user_weights: np.ndarray

    def __post_init__(self):
        for name in ("bs_positions", "irs_position", "user_positions", "task_bits",
                     "cycles_per_bit", "local_cpu", "edge_cpu_total",
                     "local_energy_per_cycle", "edge_energy_per_cycle", "tx_power",
                     "user_weights"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def Q(self):
        return self.num_cells

    @property
    def K(self):
        return self.num_users

    @property
    def M(self):
        return self.irs_elements

    def with_(self, **changes):
        return replace(self, **changes)

    def validate(self):
        return validate(self)


@dataclass
class FadingModel:
    pathloss_ref_db: float = -30.0
    exponent_direct: float = 3.5
    exponent_irs_bs: float = 2.2
    exponent_user_irs: float = 2.2
    rician_K_direct: float = 0.0
    rician_K_irs: float = 3.0

    def errors(self):
        errs = []
        for name in ("exponent_direct", "exponent_irs_bs", "exponent_user_irs"):
            val = getattr(self, name)
            if not 1.5 <= val <= 6.0:
                errs.append(f"{name} outside [1.5, 6]")
        for name in ("rician_K_direct", "rician_K_irs"):
            if getattr(self, name) < 0:
                errs.append(f"{name} negative")
        return errs


@dataclass
class ChannelSet:
    """Channel realization.

    direct: (Q, K, N_BS, N_U); irs_to_bs: (Q, N_BS, M); user_to_irs: (K, M, N_U).
    """

    direct: np.ndarray
    irs_to_bs: np.ndarray
    user_to_irs: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        q, k, nb, nu = self.direct.shape
        return q, k, self.irs_to_bs.shape[-1], nb, nu

    def without_irs(self):
        q, k, _, nb, nu = self.shape
        return ChannelSet(self.direct.copy(),
                          np.zeros((q, nb, 0), complex),
                          np.zeros((k, 0, nu), complex),
                          dict(self.meta))


def _rng(seed, *key):
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(x) for x in key]]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def place_users(num_users, seed, center=None, radius=USER_DISK_RADIUS):
    """Uniform drop in a disk (height 0); user k's position depends only on (seed, k)."""
    if center is None:
        center = 0.5 * (np.asarray(BS_POSITIONS[0]) + np.asarray(BS_POSITIONS[1]))
    center = np.asarray(center, dtype=float)
    pos = np.zeros((num_users, 3))
    for k in range(num_users):
        u, phi = _rng(seed, _TAG_USER_POS, k).random(2)
        r = radius * np.sqrt(u)
        pos[k] = center + [r * np.cos(2 * np.pi * phi), r * np.sin(2 * np.pi * phi), 0.0]
    return pos


# Constants the two-cell layout leaves open. The values put transmission time
# and edge computing time on the same order so the channel matters.
DEFAULTS = dict(
    bandwidth=1e3,
    carrier_freq=2.005e9,
    noise_var=3.16e-11,
    task_bits=1000.0,
    cycles_per_bit=0.1,
    local_cpu=10.0,
    edge_cpu_total=100.0,
    local_energy_per_cycle=1e-2,
    edge_energy_per_cycle=1e-3,
    tx_power=0.1,
    tradeoff=1.0,
    user_weight=1.0,
)


def default_params(num_users=3, irs_elements=64, seed=0, user_positions=None, **overrides):
    """Two-cell scenario with the tabulated constants and per-seed user drop."""
    q = len(BS_POSITIONS)
    c = dict(DEFAULTS)
    c.update(overrides)
    if user_positions is None:
        user_positions = place_users(num_users, seed)
    k = num_users
    return SystemParams(
        num_cells=q,
        num_users=k,
        irs_elements=irs_elements,
        bs_antennas=3,
        user_antennas=2,
        bs_positions=np.array(BS_POSITIONS),
        irs_position=np.array(IRS_POSITION),
        user_positions=np.asarray(user_positions, float),
        bandwidth=c["bandwidth"],
        carrier_freq=c["carrier_freq"],
        noise_var=c["noise_var"],
        task_bits=np.full(k, c["task_bits"]),
        cycles_per_bit=np.full(k, c["cycles_per_bit"]),
        local_cpu=np.full(k, c["local_cpu"]),
        edge_cpu_total=np.full(q, c["edge_cpu_total"]),
        local_energy_per_cycle=np.full(k, c["local_energy_per_cycle"]),
        edge_energy_per_cycle=np.full(q, c["edge_energy_per_cycle"]),
        tx_power=np.full((q, k), c["tx_power"]),
        tradeoff=c["tradeoff"],
        user_weights=np.full(k, c["user_weight"]),
    )


def validate(params):
    """Return the list of violated invariants (empty when valid)."""
    p = params
    errs = []
    if p.num_cells < 1:
        errs.append("num_cells < 1")
    if p.num_users < 1:
        errs.append("num_users < 1")
    if p.irs_elements < 0:
        errs.append("irs_elements negative")
    if p.bs_antennas < 1 or p.user_antennas < 1:
        errs.append("antenna count < 1")
    if np.shape(p.bs_positions) != (p.num_cells, 3):
        errs.append("position count: bs_positions")
    if np.shape(p.user_positions) != (p.num_users, 3):
        errs.append("position count: user_positions")
    if np.shape(p.irs_position) != (3,):
        errs.append("position count: irs_position")
    for name in ("bandwidth", "carrier_freq", "noise_var"):
        if not getattr(p, name) > 0:
            errs.append(f"{name} not positive")
    per_user = ("task_bits", "cycles_per_bit", "local_cpu", "local_energy_per_cycle", "user_weights")
    for name in per_user:
        arr = getattr(p, name)
        if arr.shape != (p.num_users,):
            errs.append(f"{name} length != num_users")
        elif not np.all(arr > 0):
            errs.append(f"{name} not positive")
    for name in ("edge_cpu_total", "edge_energy_per_cycle"):
        arr = getattr(p, name)
        if arr.shape != (p.num_cells,):
            errs.append(f"{name} length != num_cells")
        elif not np.all(arr > 0):
            errs.append(f"{name} not positive")
    if p.tx_power.shape != (p.num_cells, p.num_users):
        errs.append("tx_power shape != (num_cells, num_users)")
    elif not np.all(p.tx_power > 0):
        errs.append("tx_power not positive")
    if not np.isfinite(p.tradeoff):
        errs.append("tradeoff not finite")
    elif p.tradeoff < 0:
        errs.append("tradeoff negative")
    return errs


def pathloss(distance, fading, exponent):
    """Linear power gain ``PL_ref * d**-exponent``."""
    return 10.0 ** (fading.pathloss_ref_db / 10.0) * np.asarray(distance, float) ** (-exponent)


def steering(n, axis, direction):
    """Half-wavelength ULA response toward ``direction`` (unit vector)."""
    cos = float(np.dot(axis, direction))
    return np.exp(1j * np.pi * np.arange(n) * cos)


def _unit(v):
    return v / np.linalg.norm(v)


def _rician_block(rng, los, kappa, gain):
    shape = los.shape
    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    if np.isinf(kappa):
        return np.sqrt(gain) * los
    return np.sqrt(gain) * (np.sqrt(kappa / (1 + kappa)) * los + np.sqrt(1 / (1 + kappa)) * nlos)


def generate_channels(params, fading=None, seed=0):
    """Draw one channel realization; deterministic in (params, fading, seed)."""
    fading = fading or FadingModel()
    errs = validate(params) + fading.errors()
    if errs:
        raise InvalidParams(errs)
    p = params
    nb, nu, m = p.bs_antennas, p.user_antennas, p.irs_elements
    direct = np.zeros((p.Q, p.K, nb, nu), complex)
    irs_bs = np.zeros((p.Q, nb, m), complex)
    user_irs = np.zeros((p.K, m, nu), complex)
    irs = p.irs_position

    for q in range(p.Q):
        bs = p.bs_positions[q]
        for k in range(p.K):
            ue = p.user_positions[k]
            d = np.linalg.norm(bs - ue)
            los = np.outer(steering(nb, _BS_AXIS, _unit(ue - bs)),
                           np.conj(steering(nu, _USER_AXIS, _unit(bs - ue))))
            direct[q, k] = _rician_block(_rng(seed, _TAG_DIRECT, q, k), los, fading.rician_K_direct,
                                         pathloss(d, fading, fading.exponent_direct))
        if m:
            d = np.linalg.norm(bs - irs)
            a_bs = steering(nb, _BS_AXIS, _unit(irs - bs))
            a_irs = steering(m, _IRS_AXIS, _unit(bs - irs))
            gain = pathloss(d, fading, fading.exponent_irs_bs)
            # one column per element so that element n is the same for every M
            for n in range(m):
                los = a_bs * np.conj(a_irs[n])
                irs_bs[q, :, n] = _rician_block(_rng(seed, _TAG_IRS_BS, q, n), los,
                                                fading.rician_K_irs, gain)
    if m:
        for k in range(p.K):
            ue = p.user_positions[k]
            d = np.linalg.norm(irs - ue)
            a_irs = steering(m, _IRS_AXIS, _unit(ue - irs))
            a_ue = steering(nu, _USER_AXIS, _unit(irs - ue))
            gain = pathloss(d, fading, fading.exponent_user_irs)
            for n in range(m):
                los = a_irs[n] * np.conj(a_ue)
                user_irs[k, n, :] = _rician_block(_rng(seed, _TAG_USER_IRS, k, n), los,
                                                  fading.rician_K_irs, gain)
    return ChannelSet(direct, irs_bs, user_irs, meta={"seed": int(seed)})
