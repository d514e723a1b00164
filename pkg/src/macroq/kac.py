"""Exact quantum Kac ring: a cycle of sites each carrying one qubit and one
frozen classical scatterer bit.

One time step scatters every qubit sitting on a bit equal to -1 with a fixed
2x2 unitary V and then shifts all qubits one site to the right.  Because the
dynamics maps product states to product states, the microscopic evolution is
stored as n two-vectors and runs exactly at n = 10^5; a dense state vector on
the full (qubit x bit)^n space doubles as a brute-force oracle for n <= 7.

The emergent macroscopic evolution of the average Bloch vector is the affine
map m -> p R m + (1-p) m with p = (1 - mu)/2 and R the rotation of V.  Its
iterates form a semigroup, which is exactly what makes the entropy along
macro trajectories monotone; retaining only the scatterer average and one
magnetization component yields an autonomous but non-semigroup evolution
whose entropy oscillates.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .operators import PAULI, SIGMA0

__all__ = [
    "KacConfig",
    "KacMicroState",
    "BlochState",
    "Trajectory",
    "HTheoremReport",
    "CounterexampleReport",
    "MicroMacroReport",
    "ScalingReport",
    "RecurrenceReport",
    "scatterer_unitary",
    "rotation_matrix",
    "bloch_to_ket",
    "ket_to_bloch",
    "sample_xi",
    "initial_micro_state",
    "micro_step",
    "micro_macro_readout",
    "micro_trajectory",
    "macro_map",
    "macro_trajectory",
    "h_kac",
    "h_theorem_check",
    "counterexample_run",
    "micro_vs_macro_validation",
    "deviation_scaling",
    "recurrence_probe",
    "dense_state",
    "dense_step",
    "dense_readout",
    "dense_fidelity",
    "DENSE_SITE_CAP",
]

DENSE_SITE_CAP = 7


def scatterer_unitary(axis, theta):
    """V = exp(-i theta (a . sigma)/2) for a unit axis vector a."""
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise ValueError("rotation axis must be nonzero")
    axis = axis / norm
    a_dot_sigma = sum(axis[i] * PAULI[i + 1] for i in range(3))
    return math.cos(theta / 2) * SIGMA0 - 1j * math.sin(theta / 2) * a_dot_sigma


def rotation_matrix(v):
    """The SO(3) rotation R with V sigma_b V^dagger = sum_a R_ab sigma_a."""
    v = np.asarray(v, dtype=complex)
    r = np.empty((3, 3))
    for b in range(3):
        conj = v @ PAULI[b + 1] @ v.conj().T
        for a in range(3):
            r[a, b] = 0.5 * np.trace(PAULI[a + 1] @ conj).real
    return r


def bloch_to_ket(m):
    """Unit-norm qubit with <sigma> = m; requires |m| = 1 (pure state)."""
    m = np.asarray(m, dtype=float)
    norm = np.linalg.norm(m)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(
            f"only pure qubits have a ket; |m| = {norm:.6g} != 1 "
            "(mixed initial Bloch vectors are for macro trajectories only)"
        )
    theta = math.acos(np.clip(m[2] / norm, -1.0, 1.0))
    phi = math.atan2(m[1], m[0])
    return np.array([math.cos(theta / 2), math.sin(theta / 2) * complex(math.cos(phi), math.sin(phi))])


def ket_to_bloch(psi):
    psi = np.asarray(psi, dtype=complex)
    cross = np.conj(psi[0]) * psi[1]
    return np.array(
        [2 * cross.real, 2 * cross.imag, (abs(psi[0]) ** 2 - abs(psi[1]) ** 2)]
    )


@dataclass(frozen=True)
class BlochState:
    """Qubit state as the real 3-vector m with nu = (1 + m . sigma)/2."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3,):
            raise ValueError(f"Bloch vector must have 3 components, got {m.shape}")
        if np.linalg.norm(m) > 1.0 + 1e-12:
            raise ValueError(f"|m| = {np.linalg.norm(m):.6g} exceeds 1")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @property
    def magnitude(self):
        return float(np.linalg.norm(self.m))

    def density(self):
        out = SIGMA0.copy()
        for i in range(3):
            out += self.m[i] * PAULI[i + 1]
        return out / 2

    @classmethod
    def from_density(cls, nu):
        nu = np.asarray(nu, dtype=complex)
        m = np.array([np.trace(PAULI[i + 1] @ nu).real for i in range(3)])
        return cls(m)


@dataclass(frozen=True)
class KacConfig:
    n_sites: int
    mu: float = 0.0
    axis: tuple = (1.0, 0.0, 0.0)
    theta: float = 0.3
    initial_bloch: tuple = (0.0, 0.0, 1.0)
    xi_sampling: str = "exact_count"
    seed: int = 0
    horizon: int = 20

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        if abs(self.mu) > 1.0:
            raise ValueError(f"mu must lie in [-1, 1], got {self.mu}")
        if self.xi_sampling not in ("iid", "exact_count"):
            raise ValueError(f"unknown xi_sampling {self.xi_sampling!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if np.linalg.norm(np.asarray(self.initial_bloch, dtype=float)) > 1.0 + 1e-12:
            raise ValueError("initial Bloch vector must have |m| <= 1")

    @property
    def unitary(self):
        return scatterer_unitary(self.axis, self.theta)

    @property
    def initial_state(self):
        return BlochState(np.asarray(self.initial_bloch, dtype=float))

    def rng(self, stream=0):
        """Counter-based generator; independent streams are reproducible
        regardless of evaluation order."""
        bitgen = np.random.Philox(key=self.seed & ((1 << 64) - 1))
        if stream:
            bitgen = bitgen.jumped(stream)
        return np.random.Generator(bitgen)


@dataclass(frozen=True)
class KacMicroState:
    """Product microstate: one normalized qubit and one +/-1 bit per site."""

    psi: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        xi = np.asarray(self.xi, dtype=np.int8)
        if psi.ndim != 2 or psi.shape[1] != 2 or psi.shape[0] != xi.shape[0]:
            raise ValueError("psi must be (n_sites, 2) aligned with xi")
        if not np.all(np.isin(xi, (-1, 1))):
            raise ValueError("xi entries must be +1 or -1")
        norms = np.linalg.norm(psi, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError("site qubits must be normalized")
        psi.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "xi", xi)

    @property
    def n_sites(self):
        return self.xi.shape[0]


def sample_xi(config, rng=None):
    """Scatterer bits with average mu: iid draws, or an exactly counted and
    shuffled arrangement (the default, matching a sharp scatterer macrostate)."""
    rng = config.rng() if rng is None else rng
    n = config.n_sites
    if config.xi_sampling == "iid":
        plus = rng.random(n) < (1.0 + config.mu) / 2.0
        xi = np.where(plus, 1, -1).astype(np.int8)
    else:
        exact = n * (1.0 + config.mu) / 2.0
        n_plus = int(round(exact))
        if abs(exact - n_plus) > 1e-9:
            warnings.warn(
                f"n(1+mu)/2 = {exact:.6g} is not an integer; rounding to {n_plus} "
                "+1 bits",
                stacklevel=2,
            )
        xi = np.full(n, -1, dtype=np.int8)
        xi[:n_plus] = 1
        rng.shuffle(xi)
    return xi


def initial_micro_state(config, rng=None):
    ket = bloch_to_ket(np.asarray(config.initial_bloch, dtype=float))
    psi = np.tile(ket, (config.n_sites, 1))
    return KacMicroState(psi=psi, xi=sample_xi(config, rng))


def micro_step(state, v):
    """One dynamical step: scatter qubits sitting on -1 bits with V, then
    shift every qubit one site to the right (bits stay put)."""
    psi = np.array(state.psi)
    mask = state.xi == -1
    if mask.any():
        psi[mask] = psi[mask] @ np.asarray(v, dtype=complex).T
    psi = np.roll(psi, 1, axis=0)
    return KacMicroState(psi=psi, xi=state.xi)


def micro_macro_readout(state):
    """(mu, m): the scatterer average and the site-averaged Bloch vector."""
    mu = float(state.xi.mean())
    p0 = state.psi[:, 0]
    p1 = state.psi[:, 1]
    cross = np.conj(p0) * p1
    m = np.array(
        [
            2 * cross.real.mean(),
            2 * cross.imag.mean(),
            (np.abs(p0) ** 2 - np.abs(p1) ** 2).mean(),
        ]
    )
    return mu, m


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    bloch: np.ndarray
    mu: float
    h: np.ndarray
    provenance: str = "macro_map"

    @property
    def magnitudes(self):
        return np.linalg.norm(self.bloch, axis=1)


def macro_map(nu, mu, v):
    """Lambda_mu(nu) = (1-mu)/2 V nu V* + (1+mu)/2 nu, as a Bloch-vector map."""
    p = (1.0 - mu) / 2.0
    r = rotation_matrix(v)
    m = nu.m if isinstance(nu, BlochState) else np.asarray(nu, dtype=float)
    return BlochState(p * (r @ m) + (1.0 - p) * m)


def macro_trajectory(nu0, mu, v, horizon):
    """Iterates of the macroscopic map; by construction these satisfy the
    semigroup property, so the entropy along them is monotone."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    p = (1.0 - mu) / 2.0
    r = rotation_matrix(v)
    affine = p * r + (1.0 - p) * np.eye(3)
    bloch = np.empty((horizon + 1, 3))
    bloch[0] = nu0.m if isinstance(nu0, BlochState) else np.asarray(nu0, dtype=float)
    for t in range(horizon):
        bloch[t + 1] = affine @ bloch[t]
    h = np.array([h_kac(mu, m) for m in bloch])
    return Trajectory(times=np.arange(horizon + 1), bloch=bloch, mu=float(mu), h=h)


def micro_trajectory(config, rng=None, state=None):
    """Exact microscopic run; the reported Bloch vector is the site average."""
    state = initial_micro_state(config, rng) if state is None else state
    v = config.unitary
    bloch = np.empty((config.horizon + 1, 3))
    mu, bloch[0] = micro_macro_readout(state)
    for t in range(config.horizon):
        state = micro_step(state, v)
        _, bloch[t + 1] = micro_macro_readout(state)
    h = np.array([h_kac(mu, m) for m in bloch])
    return Trajectory(
        times=np.arange(config.horizon + 1),
        bloch=bloch,
        mu=mu,
        h=h,
        provenance="micro_average",
    )


def _eta(x):
    if x < 0.0 or x > 1.0:
        return float("-inf")
    if x == 0.0:
        return 0.0
    return -x * math.log(x)


def h_kac(mu, m):
    """Entropy per site of the sharp (mu, m) macrostate:
    eta((1+m)/2) + eta((1-m)/2) + eta((1+mu)/2) + eta((1-mu)/2) with
    m = |m| and eta(x) = -x log x; -inf outside the physical square."""
    m = np.asarray(m, dtype=float)
    m_val = float(np.linalg.norm(m)) if m.ndim else abs(float(m))
    if m_val > 1.0 + 1e-12 or abs(mu) > 1.0 + 1e-12:
        return float("-inf")
    m_val = min(m_val, 1.0)
    mu = min(max(float(mu), -1.0), 1.0)
    return (
        _eta((1 + m_val) / 2)
        + _eta((1 - m_val) / 2)
        + _eta((1 + mu) / 2)
        + _eta((1 - mu) / 2)
    )


@dataclass(frozen=True)
class HTheoremReport:
    monotone: bool
    min_increment: float
    violations: tuple


def h_theorem_check(traj, tol=1e-12):
    """Checks H(t+1) >= H(t) - tol along a trajectory and reports every dip."""
    increments = np.diff(traj.h)
    violations = tuple(
        (int(t), float(increments[t])) for t in np.nonzero(increments < -tol)[0]
    )
    return HTheoremReport(
        monotone=not violations,
        min_increment=float(increments.min()) if increments.size else 0.0,
        violations=violations,
    )


@dataclass(frozen=True)
class CounterexampleReport:
    trajectory: Trajectory
    m1: np.ndarray
    reduced_h: np.ndarray
    full_h: np.ndarray
    violation_found: bool
    violation_times: tuple


DEFAULT_COUNTEREXAMPLE = KacConfig(
    n_sites=64,
    mu=0.0,
    axis=(0.0, 0.0, 1.0),
    theta=1.0,
    initial_bloch=(0.9, 0.0, 0.0),
    horizon=20,
)


def counterexample_run(config=None, drop_tol=1e-6):
    """Reduced-observable run: keep only (mu, m_1) as macro variables.

    The exact m_1(t) is read off the full Lambda trajectory (no closed
    reduced dynamics exists; that is the point), and the reduced entropy
    uses the same formula with m = |m_1|.  A z-axis scatterer makes m_1
    oscillate while |m| shrinks slowly, so the reduced entropy dips.
    """
    config = DEFAULT_COUNTEREXAMPLE if config is None else config
    axis = np.asarray(config.axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    if abs(abs(axis[0]) - 1.0) < 1e-12:
        warnings.warn(
            "scatterer axis parallel to x: m_1 decays monotonically and no "
            "entropy dip can occur",
            stacklevel=2,
        )
    traj = macro_trajectory(config.initial_state, config.mu, config.unitary, config.horizon)
    m1 = traj.bloch[:, 0].copy()
    reduced_h = np.array([h_kac(config.mu, abs(v)) for v in m1])
    drops = np.nonzero(np.diff(reduced_h) < -drop_tol)[0]
    return CounterexampleReport(
        trajectory=traj,
        m1=m1,
        reduced_h=reduced_h,
        full_h=traj.h.copy(),
        violation_found=bool(drops.size),
        violation_times=tuple(int(t) for t in drops),
    )


@dataclass(frozen=True)
class MicroMacroReport:
    times: np.ndarray
    micro_mean: np.ndarray
    macro: np.ndarray
    deviations: np.ndarray
    max_deviation: float
    c_fitted: float
    n_seeds: int


def micro_vs_macro_validation(config, n_seeds=32):
    """Seed-ensemble mean of the microscopic Bloch average against the
    macroscopic prediction; the residual is the finite-size error of the
    autonomous description and scales like 1/sqrt(n_sites)."""
    if config.horizon > config.n_sites:
        warnings.warn(
            f"horizon {config.horizon} exceeds n_sites {config.n_sites}: the ring "
            "recurs and the macroscopic prediction stops being valid",
            stacklevel=2,
        )
    macro = macro_trajectory(
        config.initial_state, config.mu, config.unitary, config.horizon
    ).bloch
    mean = np.zeros_like(macro)
    for seed_stream in range(n_seeds):
        traj = micro_trajectory(config, rng=config.rng(stream=seed_stream))
        mean += traj.bloch
    mean /= n_seeds
    deviations = np.linalg.norm(mean - macro, axis=1)
    max_dev = float(deviations.max())
    return MicroMacroReport(
        times=np.arange(config.horizon + 1),
        micro_mean=mean,
        macro=macro,
        deviations=deviations,
        max_deviation=max_dev,
        c_fitted=max_dev * math.sqrt(config.n_sites),
        n_seeds=n_seeds,
    )


@dataclass(frozen=True)
class ScalingReport:
    ns: tuple
    max_deviations: tuple
    loglog_slope: float
    c_fitted: float


def deviation_scaling(config, ns, n_seeds=32):
    """Log-log fit of the micro/macro deviation against the ring size."""
    devs = []
    for n in ns:
        report = micro_vs_macro_validation(replace(config, n_sites=int(n)), n_seeds=n_seeds)
        devs.append(report.max_deviation)
    slope, intercept = np.polyfit(np.log(np.asarray(ns, float)), np.log(devs), 1)
    return ScalingReport(
        ns=tuple(int(n) for n in ns),
        max_deviations=tuple(devs),
        loglog_slope=float(slope),
        c_fitted=float(math.exp(intercept)),
    )


@dataclass(frozen=True)
class RecurrenceReport:
    times: np.ndarray
    deviations: np.ndarray
    band: float
    threshold: float
    departure_time: int | None


def recurrence_probe(config, band_factor=10.0):
    """Runs past the ring period to expose where autonomy breaks down.

    The pre-recurrence deviations calibrate a 1/sqrt(n) noise band; the
    probe reports the first time the micro average leaves the band by
    ``band_factor``, expected near t = n_sites when the scatterer pattern
    has been traversed once.
    """
    n = config.n_sites
    if config.horizon < 2 * n:
        warnings.warn(
            f"horizon {config.horizon} < 2 n_sites; the recurrence may fall "
            "outside the probed range",
            stacklevel=2,
        )
    macro = macro_trajectory(
        config.initial_state, config.mu, config.unitary, config.horizon
    ).bloch
    micro = micro_trajectory(config).bloch
    deviations = np.linalg.norm(micro - macro, axis=1)
    calibration = deviations[1 : max(2, n // 2)]
    band = float(np.median(calibration)) if calibration.size else 0.0
    threshold = band_factor * band
    departure = None
    if band > 0.0:
        beyond = np.nonzero(deviations > threshold)[0]
        if beyond.size:
            departure = int(beyond[0])
    return RecurrenceReport(
        times=np.arange(config.horizon + 1),
        deviations=deviations,
        band=band,
        threshold=threshold,
        departure_time=departure,
    )


# ---------------------------------------------------------------------------
# Dense brute-force oracle on the full (qubit x bit)^n space, n <= 7.
# Tensor axes: 0..n-1 qubits (site order), n..2n-1 bits; bit index 0 encodes
# xi = +1 and index 1 encodes xi = -1.
# ---------------------------------------------------------------------------


def _check_dense_size(n):
    if n > DENSE_SITE_CAP:
        raise ValueError(
            f"dense oracle limited to {DENSE_SITE_CAP} sites (4^n state vector); got {n}"
        )


def dense_state(state):
    """Full 4^n state vector of a product microstate."""
    n = state.n_sites
    _check_dense_size(n)
    vec = np.array([1.0 + 0.0j])
    for i in range(n):
        vec = np.kron(vec, state.psi[i])
    for i in range(n):
        bit = np.array([1.0, 0.0]) if state.xi[i] == 1 else np.array([0.0, 1.0])
        vec = np.kron(vec, bit.astype(complex))
    return vec


def dense_step(vec, n, v):
    """One Kac step on the dense vector: bit-controlled scattering at every
    site, then the cyclic shift of the qubit factors."""
    _check_dense_size(n)
    v = np.asarray(v, dtype=complex)
    tensor = vec.reshape((2,) * (2 * n))
    for site in range(n):
        moved = np.moveaxis(tensor, [site, n + site], [0, 1])
        out = moved.copy()
        out[:, 1, ...] = np.tensordot(v, moved[:, 1, ...], axes=(1, 0))
        tensor = np.moveaxis(out, [0, 1], [site, n + site])
    perm = list(range(1, n)) + [0] + list(range(n, 2 * n))
    tensor = np.transpose(tensor, axes=perm)
    return tensor.reshape(-1)


def dense_readout(vec, n):
    """(mu, m) from the dense vector by contracting one site at a time."""
    _check_dense_size(n)
    tensor = vec.reshape((2,) * (2 * n))
    m = np.zeros(3)
    mu = 0.0
    for site in range(n):
        for alpha in range(3):
            moved = np.moveaxis(tensor, site, 0)
            acted = np.tensordot(PAULI[alpha + 1], moved, axes=(1, 0))
            m[alpha] += np.vdot(moved, acted).real
        moved = np.moveaxis(tensor, n + site, 0)
        acted = np.tensordot(PAULI[3], moved, axes=(1, 0))
        mu += np.vdot(moved, acted).real
    return mu / n, m / n


def dense_fidelity(vec, state):
    """|<dense | product>|^2 overlap with a product microstate."""
    return float(abs(np.vdot(vec, dense_state(state))) ** 2)
