"""Microcanonical machinery: spectral window projections, H-functions,
normalized-trace expectations on a projection, and noncommutative
polynomial diagnostics for concentration of macroscopic observables."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .operators import (
    PAULI,
    HermitianOperator,
    SpectralDecomposition,
    average_observable,
    commutator_norm,
    eigh,
    operator_norm,
)

__all__ = [
    "WINDOW_SNAP_TOL",
    "WindowSpec",
    "MacroObservableSet",
    "NoncommutativePolynomial",
    "MacroValue",
    "magnetization_set",
    "delta_schedule",
    "window_mask",
    "window_rank",
    "window_projection",
    "joint_window_projection",
    "h_function",
    "h_from_rank",
    "microcanonical_expectation",
    "eval_nc_polynomial",
    "concentration_diagnostic",
    "nc_concentration_check",
    "product_moment_bound",
]

# Eigenvalues within this distance of a window edge are treated as sitting
# exactly on it.  An on-edge eigenvalue belongs to the window whose closed
# left edge it hits, so disjoint adjacent windows never double-count.
WINDOW_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class WindowSpec:
    """Half-open spectral window [center - half_width, center + half_width)."""

    center: float
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def low(self):
        return self.center - self.half_width

    @property
    def high(self):
        return self.center + self.half_width

    @classmethod
    def from_interval(cls, low, high):
        return cls(center=(low + high) / 2, half_width=(high - low) / 2)


def delta_schedule(n, c=1.0, gamma=0.4):
    """Shrinking window half-width c * n^(-gamma).

    The default gamma = 0.4 keeps sqrt(n) * delta_n growing, which is what
    lets window macrostates of average observables sharpen without losing
    the bulk of the degenerate level counting.
    """
    if gamma >= 0.5:
        warnings.warn(
            f"gamma={gamma} >= 0.5: sqrt(n)*delta_n no longer diverges",
            stacklevel=2,
        )
    return c * float(n) ** (-gamma)


@dataclass(frozen=True)
class MacroObservableSet:
    """Named macroscopic observables sharing one Hilbert space, with radii
    bounding their operator norms (used in series/bound estimates)."""

    names: tuple
    operators: tuple
    radii: tuple

    def __post_init__(self):
        if not (len(self.names) == len(self.operators) == len(self.radii)):
            raise ValueError("names, operators and radii must have equal length")
        dims = {op.dim for op in self.operators}
        if len(dims) > 1:
            raise ValueError(f"operators live on different spaces: dims {sorted(dims)}")

    @classmethod
    def build(cls, pairs, radii=None):
        """From [(name, operator), ...]; radii default to the operator norms."""
        names = tuple(name for name, _ in pairs)
        operators = tuple(op for _, op in pairs)
        if radii is None:
            radii = tuple(operator_norm(op) for op in operators)
        return cls(names, operators, tuple(float(r) for r in radii))

    @property
    def dim(self):
        return self.operators[0].dim

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown observable {name!r}; have {self.names}") from None

    def __getitem__(self, name):
        return self.operators[self.index(name)]

    def validate_radii(self):
        for name, op, r in zip(self.names, self.operators, self.radii):
            norm = operator_norm(op)
            if norm > r + 1e-12:
                raise ValueError(f"radius {r} for {name!r} below operator norm {norm}")


@dataclass(frozen=True)
class MacroValue:
    """A point x = (x_k) of candidate macroscopic values, keyed like the
    observable set."""

    names: tuple
    values: tuple

    @classmethod
    def build(cls, mapping):
        items = tuple(mapping.items())
        return cls(tuple(k for k, _ in items), tuple(float(v) for _, v in items))

    def __getitem__(self, name):
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(f"no value for observable {name!r}") from None


@dataclass(frozen=True)
class NoncommutativePolynomial:
    """Finite sum of coefficient-weighted ordered words over observable names.

    ``terms`` maps each word (a tuple of names, possibly empty for the
    constant term) to a complex coefficient.  Words multiply by
    concatenation, so the algebra operations below stay order-aware.
    """

    terms: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, c):
        return cls({(): complex(c)})

    @classmethod
    def letter(cls, name, coeff=1.0):
        return cls({(name,): complex(coeff)})

    def __add__(self, other):
        if not isinstance(other, NoncommutativePolynomial):
            other = NoncommutativePolynomial.constant(other)
        terms = dict(self.terms)
        for word, c in other.terms.items():
            terms[word] = terms.get(word, 0.0) + c
        return NoncommutativePolynomial(terms)

    def __sub__(self, other):
        return self + (other * (-1.0))

    def __mul__(self, other):
        if not isinstance(other, NoncommutativePolynomial):
            c = complex(other)
            return NoncommutativePolynomial({w: c * v for w, v in self.terms.items()})
        terms = {}
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                word = w1 + w2
                terms[word] = terms.get(word, 0.0) + c1 * c2
        return NoncommutativePolynomial(terms)

    __rmul__ = __mul__

    def truncate(self, max_degree):
        return NoncommutativePolynomial(
            {w: c for w, c in self.terms.items() if len(w) <= max_degree}
        )

    def degree(self):
        return max((len(w) for w in self.terms), default=0)

    @classmethod
    def exp(cls, p, max_degree=6):
        """Taylor series of exp(p) truncated to the given total degree."""
        result = cls.constant(1.0)
        power = cls.constant(1.0)
        for m in range(1, max_degree + 1):
            power = (power * p).truncate(max_degree)
            result = result + power * (1.0 / math.factorial(m))
        return result.truncate(max_degree)

    def classical_value(self, x):
        """Evaluation with commuting real arguments: words become products
        of the x components."""
        total = 0.0 + 0.0j
        for word, c in self.terms.items():
            prod = 1.0
            for name in word:
                prod *= x[name]
            total += c * prod
        return complex(total)

    def tail_weight(self, radii, from_degree):
        """sum |coeff| * prod r_k over words of length >= from_degree."""
        total = 0.0
        for word, c in self.terms.items():
            if len(word) >= from_degree:
                weight = abs(c)
                for name in word:
                    weight *= radii[name]
                total += weight
        return total


def magnetization_set(n_sites):
    """The three per-site-averaged Pauli components on n spin-1/2 sites.

    Each component has operator norm exactly 1, taken as its radius.
    """
    pairs = [
        (f"m{alpha}", average_observable(PAULI[alpha], n_sites)) for alpha in (1, 2, 3)
    ]
    return MacroObservableSet.build(pairs, radii=(1.0, 1.0, 1.0))


def window_mask(eigenvalues, window, snap_tol=WINDOW_SNAP_TOL):
    """Boolean selector for eigenvalues inside a half-open window.

    The snap tolerance resolves floating-point boundary hits: a value
    within ``snap_tol`` of an edge counts as on the edge, hence inside at
    the closed left edge and outside at the open right edge.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    return (eigenvalues >= window.low - snap_tol) & (eigenvalues < window.high - snap_tol)


def window_rank(x, window):
    """Number of eigenvalues (with multiplicity) inside the window."""
    if isinstance(x, SpectralDecomposition):
        values = x.eigenvalues
    elif isinstance(x, HermitianOperator):
        values = eigh(x).eigenvalues
    else:
        values = np.asarray(x, dtype=float)
    return int(np.count_nonzero(window_mask(values, window)))


def window_projection(x, window):
    """Orthogonal projection onto the eigenspaces with eigenvalue in the window.

    An empty window yields the zero projection and a warning.
    """
    sd = x if isinstance(x, SpectralDecomposition) else eigh(x)
    mask = window_mask(sd.eigenvalues, window)
    if not mask.any():
        warnings.warn(
            f"window [{window.low}, {window.high}) contains no eigenvalue; "
            "returning the zero projection",
            stacklevel=2,
        )
        dim = sd.eigenvectors.shape[0]
        return HermitianOperator(np.zeros((dim, dim), dtype=complex))
    u = sd.eigenvectors[:, mask]
    return HermitianOperator(u @ u.conj().T, certified=True)


def joint_window_projection(xs, windows, commutator_tol=1e-9):
    """Product of window projections of mutually commuting observables.

    Rejects non-commuting inputs, naming the first offending pair; for
    commuting inputs the product is itself an orthogonal projection.
    """
    if len(xs) != len(windows):
        raise ValueError("one window per observable required")
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            cn = commutator_norm(xs[i], xs[j])
            if cn > commutator_tol:
                raise ValueError(
                    f"observables {i} and {j} do not commute: "
                    f"commutator norm {cn:.3e} > {commutator_tol:.0e}"
                )
    product = None
    for x, w in zip(xs, windows):
        p = window_projection(x, w).entries
        product = p if product is None else product @ p
    return HermitianOperator(product)


def h_from_rank(rank, n):
    """(1/n) log rank, with rank 0 mapping to -inf."""
    if rank < 0:
        raise ValueError("negative rank")
    if rank == 0:
        return float("-inf")
    return math.log(rank) / n


def h_function(p, n):
    """Per-site log-dimension (1/n) log Tr P of a projection; the finite-size
    Boltzmann count of the macrostate."""
    entries = p.entries if isinstance(p, HermitianOperator) else np.asarray(p)
    rank = int(round(float(np.trace(entries).real)))
    return h_from_rank(rank, n)


def _projection_trace(p):
    entries = p.entries if isinstance(p, HermitianOperator) else np.asarray(p)
    return entries, float(np.trace(entries).real)


def microcanonical_expectation(a, p):
    """Tr(P A) / Tr(P), the normalized trace on the range of the projection."""
    p_entries, tr_p = _projection_trace(p)
    if tr_p < 0.5:
        raise ValueError("zero projection: the conditioned trace state is undefined")
    a_entries = a.entries if isinstance(a, HermitianOperator) else np.asarray(a)
    value = np.einsum("ij,ji->", p_entries, a_entries) / tr_p
    if isinstance(a, HermitianOperator) and a.hermitian:
        return float(value.real)
    return complex(value)


def eval_nc_polynomial(poly, xs):
    """The ordered operator sum: each word becomes a left-to-right product
    of the named observables.  Generally non-Hermitian."""
    dim = xs.dim
    total = np.zeros((dim, dim), dtype=complex)
    identity = np.eye(dim, dtype=complex)
    for word, c in poly.terms.items():
        factor = identity
        for name in word:
            factor = factor @ xs[name].entries
        total += c * factor
    return HermitianOperator(total, hermitian=False)


def concentration_diagnostic(p, xs, x):
    """Per-observable mean and second moment about the target value.

    Under a projection family concentrating at x every variance entry must
    shrink along an n-sweep; the caller owns the sweep.
    """
    p_entries, tr_p = _projection_trace(p)
    if tr_p < 0.5:
        raise ValueError("zero projection")
    report = {}
    for name, op in zip(xs.names, xs.operators):
        target = x[name]
        mean = float((np.einsum("ij,ji->", p_entries, op.entries) / tr_p).real)
        shifted = op.entries - target * np.eye(op.dim)
        second = shifted @ shifted
        variance = float((np.einsum("ij,ji->", p_entries, second) / tr_p).real)
        report[name] = {"mean": mean, "variance": variance}
    return report


def nc_concentration_check(p, poly, xs, x):
    """Both sides of the noncommutative law of large numbers at finite size:
    lhs = tr(G(X) | P), rhs = G(x), and their absolute gap."""
    g_op = eval_nc_polynomial(poly, xs)
    lhs = microcanonical_expectation(g_op, p)
    rhs = poly.classical_value(x)
    return {"lhs": complex(lhs), "rhs": rhs, "gap": abs(complex(lhs) - rhs)}


def product_moment_bound(p, xs, x, name_j, name_k):
    """Exact finite-size Cauchy-Schwarz control of the pair moment.

    Returns the gap |tr(X_j X_k | P) - x_j x_k| together with the bound
    ||X_j|| sqrt(tr((X_k - x_k)^2 | P)) + |x_k| |tr(X_j | P) - x_j|,
    which holds at every size, not only in the limit.
    """
    pair = NoncommutativePolynomial.letter(name_j) * NoncommutativePolynomial.letter(name_k)
    check = nc_concentration_check(p, pair, xs, x)
    diag = concentration_diagnostic(p, xs, x)
    norm_j = operator_norm(xs[name_j])
    bound = norm_j * math.sqrt(max(diag[name_k]["variance"], 0.0)) + abs(x[name_k]) * abs(
        diag[name_j]["mean"] - x[name_j]
    )
    return {"gap": check["gap"], "bound": float(bound), "lhs": check["lhs"], "rhs": check["rhs"]}
