"""Canonical Gibbs machinery and equivalence-of-ensembles diagnostics.

Builds exponential-family states exp(n sum_k lambda_k X_k)/Z for a set of
(possibly noncommuting) macroscopic observables, solves the inverse
problem lambda(x) by damped Newton with the exact Kubo-Mori Jacobian,
and computes the spectral quantities that control when the canonical and
window-projection descriptions agree: exponential concentration rates,
asymptotic-equipartition window masses, and the per-site gap between the
log-dimension of the typical subspace and the entropy.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .macrostates import WindowSpec, window_mask
from .operators import (
    DensityMatrix,
    HermitianOperator,
    SpectralDecomposition,
    eigh,
    is_diagonal,
)

__all__ = [
    "GibbsSpec",
    "EntropyReport",
    "ConcentrationRateEstimate",
    "EquipartitionReport",
    "EquipartitionProjection",
    "LambdaSolveError",
    "gibbs_state",
    "pressure",
    "von_neumann_entropy",
    "relative_entropy",
    "solve_lambda",
    "h_can1",
    "gibbs_report",
    "window_mass",
    "fit_decay_rate",
    "concentration_rate",
    "aep_check",
    "equipartition_projection",
    "generating_function",
    "psi_prime_zero",
    "cp_contraction_check",
    "apply_channel",
]

EIGENVALUE_FLOOR = 1e-300
SUPPORT_EIG_TOL = 1e-14
SUPPORT_MASS_TOL = 1e-12


@dataclass(frozen=True)
class GibbsSpec:
    """Parameters of the exponential-family state exp(n sum lambda_k X_k)/Z."""

    lam: tuple
    xs: "MacroObservableSet"
    n: int

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lam)
        object.__setattr__(self, "lam", lam)
        if len(lam) != len(self.xs.names):
            raise ValueError("one lambda per observable required")
        if not all(math.isfinite(v) for v in lam):
            raise ValueError(f"lambda must be finite, got {lam}")


@dataclass(frozen=True)
class EntropyReport:
    vn_entropy_per_site: float
    pressure: float
    relative_entropy_per_site: float | None = None


@dataclass(frozen=True)
class ConcentrationRateEstimate:
    delta: float
    ns: tuple
    tail_masses: tuple
    rate: float
    fit_residual: float
    floored_ns: tuple


@dataclass(frozen=True)
class EquipartitionReport:
    mass: float
    log_mass_per_site: float
    floored_eigenvalues: int


@dataclass(frozen=True)
class EquipartitionProjection:
    projection: HermitianOperator | None
    trace: int
    gap: float
    mass: float
    op_bounds_ok: bool
    empty: bool


class LambdaSolveError(RuntimeError):
    """Newton failed; carries the best iterate seen so far."""

    def __init__(self, message, best_lambda, residual, iterations, diverged=False):
        super().__init__(message)
        self.best_lambda = np.asarray(best_lambda, dtype=float)
        self.residual = float(residual)
        self.iterations = int(iterations)
        self.diverged = bool(diverged)


def _exponent_eigs(lam, xs, n):
    """Spectral decomposition of n * sum_k lambda_k X_k."""
    dim = xs.dim
    total = np.zeros((dim, dim), dtype=complex)
    for coeff, op in zip(lam, xs.operators):
        if coeff != 0.0:
            total += (n * coeff) * op.entries
    return eigh(HermitianOperator(total))


def _is_permutation(u):
    return np.count_nonzero(u) == u.shape[0]


def _entries_from_eigs(values, vectors):
    # Permutation eigenvectors (diagonal operators) admit an O(dim^2) build.
    if _is_permutation(vectors):
        rows, cols = np.nonzero(vectors)
        out = np.zeros(vectors.shape, dtype=complex)
        diag = np.empty(vectors.shape[0], dtype=complex)
        diag[rows] = values[cols] * np.abs(vectors[rows, cols]) ** 2
        np.fill_diagonal(out, diag)
        return out
    return (vectors * values) @ vectors.conj().T


def _state_weights(dm, basis):
    """<v_j| sigma |v_j> for every column v_j of ``basis``."""
    entries = dm.entries
    if is_diagonal(entries):
        return (entries.diagonal().real @ (np.abs(basis) ** 2)).real
    sv = entries @ basis
    return np.einsum("ij,ij->j", basis.conj(), sv).real


def gibbs_state(spec):
    """Density matrix proportional to exp(n sum lambda_k X_k); strictly positive.

    The exponent is shifted by its top eigenvalue before exponentiation,
    which cancels in the normalization, so there is no overflow for any
    finite lambda.
    """
    sd = _exponent_eigs(spec.lam, spec.xs, spec.n)
    log_z = logsumexp(sd.eigenvalues)
    weights = np.exp(sd.eigenvalues - log_z)
    weights /= weights.sum()
    entries = _entries_from_eigs(weights, sd.eigenvectors)
    order = np.argsort(weights, kind="stable")
    return DensityMatrix(
        HermitianOperator(entries, certified=True),
        eigenvalues=weights[order],
        eigenvectors=sd.eigenvectors[:, order],
    )


def pressure(spec):
    """(1/n) log Tr exp(n sum lambda_k X_k), evaluated shift-stably."""
    sd = _exponent_eigs(spec.lam, spec.xs, spec.n)
    return float(logsumexp(sd.eigenvalues)) / spec.n


def von_neumann_entropy(dm):
    """-Tr[sigma log sigma] = -sum_i p_i log p_i with 0 log 0 = 0."""
    p = np.clip(dm.eigenvalues, 0.0, None)
    nz = p > 0.0
    return float(-(p[nz] * np.log(p[nz])).sum())


def relative_entropy(dm, dm0):
    """Tr[sigma (log sigma - log sigma_0)].

    Eigenvalues of sigma_0 below 1e-14 define its effective null space; if
    sigma puts more than 1e-12 of mass there the support condition fails
    and the result is +inf (with a diagnostic warning).
    """
    if dm.dim != dm0.dim:
        raise ValueError(f"dimension mismatch: {dm.dim} vs {dm0.dim}")
    if dm0.eigenvectors is None:
        q, v = np.linalg.eigh(dm0.entries)
    else:
        q, v = dm0.eigenvalues, dm0.eigenvectors
    weights = _state_weights(dm, v)
    null = q < SUPPORT_EIG_TOL
    out_of_support = float(weights[null].sum()) if null.any() else 0.0
    if out_of_support > SUPPORT_MASS_TOL:
        warnings.warn(
            f"support violation: {out_of_support:.3e} of the state's mass sits "
            "on the reference state's null space; relative entropy is +inf",
            stacklevel=2,
        )
        return float("inf")
    p = np.clip(dm.eigenvalues, 0.0, None)
    nz = p > 0.0
    s_term = float((p[nz] * np.log(p[nz])).sum())
    keep = ~null
    cross = float((weights[keep] * np.log(q[keep])).sum())
    return s_term - cross


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_NODES = (_GL_NODES + 1.0) / 2.0
_GL_WEIGHTS = _GL_WEIGHTS / 2.0


def _moments_and_basis(lam, xs, n):
    sd = _exponent_eigs(lam, xs, n)
    b = sd.eigenvalues - logsumexp(sd.eigenvalues)
    w = np.exp(b)
    u = sd.eigenvectors
    tilde = []
    diag_weight_means = []
    for op in xs.operators:
        xt = u.conj().T @ op.entries @ u
        tilde.append(xt)
        diag_weight_means.append(float((w * xt.diagonal().real).sum()))
    return b, w, tilde, np.array(diag_weight_means)


def _kubo_mori_jacobian(b, tilde, means, n):
    # Duhamel derivative of the matrix exponential, 32-point Gauss-Legendre
    # on [0,1]; phi[p,q] = int_0^1 exp(s b_q + (1-s) b_p) ds with b already
    # normalized so that logsumexp(b) = 0.
    phi = np.zeros((b.size, b.size))
    for s, gw in zip(_GL_NODES, _GL_WEIGHTS):
        phi += gw * np.exp(np.add.outer((1.0 - s) * b, s * b))
    k = len(tilde)
    jac = np.empty((k, k))
    for j in range(k):
        for kk in range(j, k):
            second = float(np.real((tilde[j] * tilde[kk].T * phi).sum()))
            jac[j, kk] = jac[kk, j] = n * (second - means[j] * means[kk])
    return jac


def _fd_jacobian(lam, xs, n, step=1e-5):
    k = len(lam)
    jac = np.empty((k, k))
    for col in range(k):
        up = np.array(lam, dtype=float)
        dn = up.copy()
        up[col] += step
        dn[col] -= step
        m_up = _moments_and_basis(up, xs, n)[3]
        m_dn = _moments_and_basis(dn, xs, n)[3]
        jac[:, col] = (m_up - m_dn) / (2 * step)
    return jac


def solve_lambda(x_target, xs, n, tol=1e-8, max_iter=200, lam0=None,
                 divergence_norm=1e3, max_halvings=40):
    """Solve omega_lambda(X_k) = x_k by damped Newton.

    The Jacobian d omega/d lambda is the Kubo-Mori covariance, positive
    semidefinite, computed exactly through the Duhamel integral for up to
    four observables and by symmetric finite differences beyond that.
    Raises LambdaSolveError on divergence (diagnosing a target on or
    outside the achievable mean set) or when out of iterations.
    """
    x_target = np.asarray(x_target, dtype=float)
    k = len(xs.names)
    if x_target.shape != (k,):
        raise ValueError(f"expected {k} target values, got shape {x_target.shape}")
    lam = np.zeros(k) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    exact_jacobian = k <= 4

    b, w, tilde, means = _moments_and_basis(lam, xs, n)
    residual = means - x_target
    best = (np.max(np.abs(residual)), lam.copy())
    for iteration in range(max_iter):
        res_norm = np.max(np.abs(residual))
        if res_norm < best[0]:
            best = (res_norm, lam.copy())
        if res_norm <= tol:
            return lam
        if np.linalg.norm(lam) > divergence_norm:
            raise LambdaSolveError(
                f"|lambda| exceeded {divergence_norm:g}: the target is on or outside "
                "the boundary of the achievable mean set",
                best[1], best[0], iteration, diverged=True,
            )
        if exact_jacobian:
            jac = _kubo_mori_jacobian(b, tilde, means, n)
        else:
            jac = _fd_jacobian(lam, xs, n)
        try:
            step_dir = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError:
            step_dir, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        scale = 1.0
        for _ in range(max_halvings):
            trial = lam + scale * step_dir
            b_t, w_t, tilde_t, means_t = _moments_and_basis(trial, xs, n)
            trial_res = means_t - x_target
            if np.linalg.norm(trial_res) < np.linalg.norm(residual):
                lam, b, tilde, means, residual = trial, b_t, tilde_t, means_t, trial_res
                break
            scale /= 2
        else:
            raise LambdaSolveError(
                "line search stalled: no step decreased the residual",
                best[1], best[0], iteration,
            )
    raise LambdaSolveError(
        f"no convergence within {max_iter} iterations",
        best[1], best[0], max_iter,
    )


def h_can1(x_target, xs, n, tol=1e-8):
    """Legendre value p(lambda(x)) - sum_k lambda_k x_k.

    At finite n this equals the per-site von Neumann entropy of the solved
    Gibbs state up to the solver tolerance.
    """
    x_target = np.asarray(x_target, dtype=float)
    lam = solve_lambda(x_target, xs, n, tol=tol)
    spec = GibbsSpec(tuple(lam), xs, n)
    return pressure(spec) - float(lam @ x_target)


def gibbs_report(spec, reference=None):
    dm = gibbs_state(spec)
    rel = None
    if reference is not None:
        rel = relative_entropy(dm, reference) / spec.n
    return EntropyReport(
        vn_entropy_per_site=von_neumann_entropy(dm) / spec.n,
        pressure=pressure(spec),
        relative_entropy_per_site=rel,
    )


def window_mass(dm, observable, window):
    """omega-mass of the spectral window: Tr(sigma P) for P the window
    projection of the observable."""
    sd = observable if isinstance(observable, SpectralDecomposition) else eigh(observable)
    weights = _state_weights(dm, sd.eigenvectors)
    mask = window_mask(sd.eigenvalues, window)
    return float(weights[mask].sum())


def fit_decay_rate(ns, tail_masses, drop_smallest=True):
    """Least-squares slope of -log p_n against n and the RMS fit residual.

    The smallest size is dropped as a transient by default.
    """
    ns_arr = np.asarray(ns, dtype=float)
    y = -np.log(np.asarray(tail_masses, dtype=float))
    keep = np.ones(ns_arr.size, dtype=bool)
    if drop_smallest and ns_arr.size > 2:
        keep[int(np.argmin(ns_arr))] = False
    slope, intercept = np.polyfit(ns_arr[keep], y[keep], 1)
    fit = slope * ns_arr[keep] + intercept
    residual = float(np.sqrt(np.mean((fit - y[keep]) ** 2)))
    return float(slope), residual


def concentration_rate(ns, states, observables, x_center, delta, drop_smallest=True):
    """Fit the exponential decay rate of the spectral mass outside the
    window [x - delta, x + delta).

    Tail masses are computed exactly per size; the rate is the unweighted
    least-squares slope of -log p_n against n, with the smallest n dropped
    as a transient.  A zero tail is replaced by the smallest positive
    float and flagged.
    """
    ns = [int(n) for n in ns]
    if len(ns) < 3:
        raise ValueError("need at least three system sizes to fit a rate")
    if not (len(ns) == len(states) == len(observables)):
        raise ValueError("ns, states and observables must align")
    window = WindowSpec(center=float(x_center), half_width=float(delta))
    tails = []
    floored = []
    for n, dm, op in zip(ns, states, observables):
        tail = 1.0 - window_mass(dm, op, window)
        if tail <= 0.0:
            tail = float(np.finfo(float).tiny)
            floored.append(n)
        tails.append(tail)
    rate, residual = fit_decay_rate(ns, tails, drop_smallest=drop_smallest)
    return ConcentrationRateEstimate(
        delta=float(delta),
        ns=tuple(ns),
        tail_masses=tuple(tails),
        rate=rate,
        fit_residual=residual,
        floored_ns=tuple(floored),
    )


def _surprisal_spectrum(dm, n):
    """Eigenvalues of (1/n)(log sigma - omega(log sigma)), aligned with the
    state's own eigenbasis; floored eigenvalues are counted and flagged."""
    p = dm.eigenvalues
    floored = int(np.count_nonzero(p < EIGENVALUE_FLOOR))
    if floored:
        warnings.warn(
            f"{floored} eigenvalue(s) floored at {EIGENVALUE_FLOOR:.0e}; the state "
            "is not strictly positive",
            stacklevel=3,
        )
    safe = np.maximum(p, EIGENVALUE_FLOOR)
    log_p = np.log(safe)
    nz = p > 0.0
    mean_log = float((p[nz] * log_p[nz]).sum())
    return (log_p - mean_log) / n, floored


def aep_check(dm, n, delta):
    """Mass of the state inside the [-delta, delta) window of its own
    surprisal operator, and the per-site log of that mass.

    Equipartition holds along a family when the per-site log tends to
    zero: almost all probability then sits on near-equal eigenvalues.
    """
    a, floored = _surprisal_spectrum(dm, n)
    mask = window_mask(a, WindowSpec(0.0, float(delta)))
    mass = float(np.clip(dm.eigenvalues, 0.0, None)[mask].sum())
    log_mass = float("-inf") if mass <= 0.0 else math.log(mass) / n
    return EquipartitionReport(mass=mass, log_mass_per_site=log_mass, floored_eigenvalues=floored)


def equipartition_projection(dm, n, delta_n, return_projection=True):
    """Projection onto the typical subspace: eigenvectors of sigma whose
    surprisal deviates from the mean by at most delta_n per site.

    Reports the per-site gap (1/n)(log Tr P - H(omega)), which vanishes
    along families satisfying equipartition, and verifies the two-sided
    operator bounds e^{n(h -/+ delta)} on sigma^{-1} restricted to the
    range of P by eigenvalue containment.
    """
    a, _ = _surprisal_spectrum(dm, n)
    mask = window_mask(a, WindowSpec(0.0, float(delta_n)))
    trace = int(np.count_nonzero(mask))
    p = np.clip(dm.eigenvalues, 0.0, None)
    entropy = von_neumann_entropy(dm)
    h_per_site = entropy / n
    if trace == 0:
        warnings.warn(
            f"delta_n={delta_n:g} captures no eigenvalue at n={n}; "
            "the typical window is too narrow at this size",
            stacklevel=2,
        )
        return EquipartitionProjection(None, 0, float("-inf"), 0.0, True, True)
    mass = float(p[mask].sum())
    gap = (math.log(trace) - entropy) / n
    lo = math.exp(-n * (h_per_site + delta_n)) * (1 - 1e-9) - 1e-300
    hi = math.exp(-n * (h_per_site - delta_n)) * (1 + 1e-9)
    inside = dm.eigenvalues[mask]
    op_bounds_ok = bool(np.all(inside >= lo) and np.all(inside <= hi))
    projection = None
    if return_projection:
        if dm.eigenvectors is None:
            _, vectors = np.linalg.eigh(dm.entries)
        else:
            vectors = dm.eigenvectors
        u = vectors[:, mask]
        projection = HermitianOperator(u @ u.conj().T, certified=True)
    return EquipartitionProjection(projection, trace, gap, mass, op_bounds_ok, False)


def _as_state(state):
    if isinstance(state, DensityMatrix):
        return state
    return DensityMatrix.from_projection(state)


def generating_function(state, observable, t, n):
    """psi_n(t) = (1/n) log omega(exp(t n X)), computed in the eigenbasis of
    X with a spectral shift, so any finite t is safe."""
    dm = _as_state(state)
    sd = observable if isinstance(observable, SpectralDecomposition) else eigh(observable)
    weights = np.clip(_state_weights(dm, sd.eigenvectors), 0.0, None)
    exponents = float(t) * n * sd.eigenvalues
    return float(logsumexp(exponents, b=weights)) / n


def psi_prime_zero(state, observable, n, step=1e-4):
    """Central-difference derivative of the generating function at t = 0;
    estimates the concentration point of the observable."""
    up = generating_function(state, observable, step, n)
    dn = generating_function(state, observable, -step, n)
    return (up - dn) / (2 * step)


def apply_channel(kraus, dm, completeness_tol=1e-10):
    """Apply a completely positive trace-preserving map given by Kraus
    operators: sigma -> sum_K K sigma K^dagger."""
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    dim = kraus[0].shape[0]
    total = np.zeros((dim, dim), dtype=complex)
    for k in kraus:
        total += k.conj().T @ k
    defect = np.max(np.abs(total - np.eye(dim)))
    if defect > completeness_tol:
        raise ValueError(
            f"Kraus set is not trace preserving: |sum K^dagger K - I| = {defect:.3e}"
        )
    out = np.zeros((dim, dim), dtype=complex)
    for k in kraus:
        out += k @ dm.entries @ k.conj().T
    return DensityMatrix(HermitianOperator(out))


def cp_contraction_check(omega, rho, kraus):
    """Relative entropy before and after a CPTP map; the data-processing
    inequality guarantees after <= before."""
    before = relative_entropy(omega, rho)
    after = relative_entropy(apply_channel(kraus, omega), apply_channel(kraus, rho))
    return {"before": before, "after": after}
