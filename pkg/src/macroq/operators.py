"""Dense Hermitian linear algebra for spin-chain Hilbert spaces.

Everything downstream (window projections, Gibbs states, the Kac ring
oracle) works with full spectral data of dense complex matrices, so this
module deliberately offers only dense storage, up to a configurable
dimension cap.
"""

import warnings

import numpy as np

__all__ = [
    "DEFAULT_DIM_CAP",
    "SIGMA0",
    "SIGMA1",
    "SIGMA2",
    "SIGMA3",
    "PAULI",
    "HermitianOperator",
    "SpectralDecomposition",
    "DensityMatrix",
    "embed_site_operator",
    "average_observable",
    "eigh",
    "matrix_function",
    "commutator_norm",
    "operator_norm",
]

# Largest Hilbert-space dimension the dense routines accept by default.
DEFAULT_DIM_CAP = 2 ** 13

HERMITICITY_TOL = 1e-12

SIGMA0 = np.eye(2, dtype=complex)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)

# Indexed so PAULI[alpha] is sigma^alpha for alpha = 1, 2, 3.
PAULI = (SIGMA0, SIGMA1, SIGMA2, SIGMA3)


class HermitianOperator:
    """A dense complex square matrix certified Hermitian.

    Construction symmetrizes the input, (A + A^dagger)/2, and warns when
    the correction exceeds ``HERMITICITY_TOL``; pass ``hermitian=False``
    to store a general square matrix (e.g. an operator product) without
    the certificate.  ``certified=True`` skips the symmetrization scan for
    entries that are Hermitian by construction (sums and real multiples of
    Hermitian matrices are exactly Hermitian in floating point).
    """

    __slots__ = ("entries", "dim", "hermitian")

    def __init__(self, entries, hermitian=True, certified=False):
        entries = np.asarray(entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {entries.shape}")
        if entries.shape[0] < 1:
            raise ValueError("dimension must be at least 1")
        if hermitian and not certified:
            defect = np.max(np.abs(entries - entries.conj().T))
            if defect > HERMITICITY_TOL:
                warnings.warn(
                    f"input symmetrized; Hermiticity defect {defect:.3e} "
                    f"exceeds {HERMITICITY_TOL:.0e}",
                    stacklevel=2,
                )
            entries = (entries + entries.conj().T) / 2
        entries.setflags(write=False)
        self.entries = entries
        self.dim = entries.shape[0]
        self.hermitian = bool(hermitian)

    def __repr__(self):
        tag = "hermitian" if self.hermitian else "general"
        return f"HermitianOperator(dim={self.dim}, {tag})"

    def __matmul__(self, other):
        other_entries = other.entries if isinstance(other, HermitianOperator) else other
        return HermitianOperator(self.entries @ other_entries, hermitian=False)

    def __add__(self, other):
        if isinstance(other, HermitianOperator):
            both = self.hermitian and other.hermitian
            return HermitianOperator(
                self.entries + other.entries, hermitian=both, certified=both
            )
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, HermitianOperator):
            both = self.hermitian and other.hermitian
            return HermitianOperator(
                self.entries - other.entries, hermitian=both, certified=both
            )
        return NotImplemented

    def __mul__(self, scalar):
        scalar = complex(scalar)
        stays_hermitian = self.hermitian and scalar.imag == 0.0
        return HermitianOperator(
            scalar * self.entries, hermitian=stays_hermitian, certified=stays_hermitian
        )

    __rmul__ = __mul__

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim, dtype=complex))

    def trace(self):
        return complex(np.trace(self.entries))


class SpectralDecomposition:
    """Eigenvalues sorted ascending with the matching unitary of column
    eigenvectors; realizes the projection-valued measure of an observable."""

    __slots__ = ("eigenvalues", "eigenvectors")

    def __init__(self, eigenvalues, eigenvectors):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(eigenvectors, dtype=complex)

    def reconstruct(self):
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T

    def apply(self, f):
        """U diag(f(lambda)) U^dagger for a real function f of the spectrum."""
        values = np.asarray([f(lam) for lam in self.eigenvalues], dtype=complex)
        u = self.eigenvectors
        return (u * values) @ u.conj().T


class DensityMatrix:
    """Positive semidefinite, unit-trace operator.

    ``eigenvalues``/``eigenvectors`` may be supplied when the spectrum is
    already known (e.g. from the Gibbs construction); otherwise the PSD
    check diagonalizes once and caches the result for entropy routines.
    """

    __slots__ = ("op", "eigenvalues", "eigenvectors")

    TRACE_TOL = 1e-10
    EIG_FLOOR = -1e-10

    def __init__(self, op, eigenvalues=None, eigenvectors=None):
        if not isinstance(op, HermitianOperator):
            op = HermitianOperator(op)
        tr = op.trace()
        if abs(tr - 1.0) > self.TRACE_TOL:
            raise ValueError(f"trace {tr} is not 1 within {self.TRACE_TOL:.0e}")
        if eigenvalues is None:
            eigenvalues, eigenvectors = np.linalg.eigh(op.entries)
        eigenvalues = np.asarray(eigenvalues, dtype=float)
        if eigenvalues.min() < self.EIG_FLOOR:
            raise ValueError(
                f"not positive semidefinite: smallest eigenvalue {eigenvalues.min():.3e}"
            )
        self.op = op
        self.eigenvalues = eigenvalues
        self.eigenvectors = None if eigenvectors is None else np.asarray(eigenvectors, dtype=complex)

    @property
    def dim(self):
        return self.op.dim

    @property
    def entries(self):
        return self.op.entries

    @classmethod
    def maximally_mixed(cls, dim):
        return cls(
            HermitianOperator(np.eye(dim, dtype=complex) / dim),
            eigenvalues=np.full(dim, 1.0 / dim),
            eigenvectors=np.eye(dim, dtype=complex),
        )

    @classmethod
    def from_projection(cls, p):
        """The normalized trace state tr(. | P) on the range of a projection."""
        entries = p.entries if isinstance(p, HermitianOperator) else np.asarray(p)
        rank = float(np.trace(entries).real)
        if rank < 0.5:
            raise ValueError("zero projection carries no state")
        return cls(HermitianOperator(entries / rank))

    def expectation(self, a):
        entries = a.entries if isinstance(a, HermitianOperator) else np.asarray(a)
        value = np.einsum("ij,ji->", self.entries, entries)
        return complex(value)


def _check_dim_cap(dim, max_dim):
    if dim > max_dim:
        raise ValueError(f"dimension {dim} exceeds the configured cap {max_dim}")


def _add_embedded(total, local, site, n_sites):
    # I x local x I has 4 * 2^(n-1) nonzeros; write them directly instead of
    # materializing Kronecker factors (dense kron is the cost driver at
    # dim ~ 4096).
    dim_left = 2 ** (site - 1)
    dim_right = 2 ** (n_sites - site)
    view = total.reshape(dim_left, 2, dim_right, dim_left, 2, dim_right)
    idx_left = np.arange(dim_left)[:, None]
    idx_right = np.arange(dim_right)[None, :]
    for s in range(2):
        for t in range(2):
            if local[s, t] != 0.0:
                view[idx_left, s, idx_right, idx_left, t, idx_right] += local[s, t]


def embed_site_operator(local, site, n_sites, max_dim=DEFAULT_DIM_CAP):
    """I x ... x local x ... x I with ``local`` at position ``site``.

    Sites are numbered 1..n_sites.  The result acts on (C^2)^{x n_sites}.
    """
    local = np.asarray(local, dtype=complex)
    if local.shape != (2, 2):
        raise ValueError(f"local operator must be 2x2, got {local.shape}")
    if not 1 <= site <= n_sites:
        raise ValueError(f"site {site} out of range 1..{n_sites}")
    dim = 2 ** n_sites
    _check_dim_cap(dim, max_dim)
    entries = np.zeros((dim, dim), dtype=complex)
    _add_embedded(entries, local, site, n_sites)
    hermitian = np.max(np.abs(local - local.conj().T)) <= HERMITICITY_TOL
    return HermitianOperator(entries, hermitian=hermitian, certified=hermitian)


def average_observable(local, n_sites, max_dim=DEFAULT_DIM_CAP):
    """(1/n) sum_i of the site embeddings of a Hermitian 2x2 operator."""
    local = np.asarray(local, dtype=complex)
    if np.max(np.abs(local - local.conj().T)) > HERMITICITY_TOL:
        raise ValueError("local operator must be Hermitian")
    dim = 2 ** n_sites
    _check_dim_cap(dim, max_dim)
    total = np.zeros((dim, dim), dtype=complex)
    for site in range(1, n_sites + 1):
        _add_embedded(total, local / n_sites, site, n_sites)
    return HermitianOperator(total, certified=True)


def _diagonal_eigh(entries):
    # Spin-z sums and Gibbs exponents along the z axis are exactly diagonal;
    # sorting the diagonal avoids an O(dim^3) LAPACK call at dim ~ 4096.
    diag = entries.diagonal().real
    order = np.argsort(diag, kind="stable")
    vectors = np.zeros(entries.shape, dtype=complex)
    vectors[order, np.arange(entries.shape[0])] = 1.0
    return SpectralDecomposition(diag[order], vectors)


def is_diagonal(entries):
    """Exact diagonality check without copying: all nonzeros sit on the
    diagonal."""
    return np.count_nonzero(entries) == np.count_nonzero(entries.diagonal())


def eigh(a):
    """Full spectral decomposition of a Hermitian operator, eigenvalues ascending."""
    if isinstance(a, HermitianOperator):
        if not a.hermitian:
            raise ValueError("eigh requires a certified Hermitian operator")
        entries = a.entries
    else:
        entries = np.asarray(a, dtype=complex)
        if np.max(np.abs(entries - entries.conj().T)) > 1e-10:
            raise ValueError("eigh requires a Hermitian matrix")
    if is_diagonal(entries):
        return _diagonal_eigh(entries)
    values, vectors = np.linalg.eigh(entries)
    return SpectralDecomposition(values, vectors)


def matrix_function(a, f):
    """U diag(f(lambda)) U^dagger through the spectral decomposition of ``a``.

    Raises if ``f`` is undefined (non-finite) at an eigenvalue; callers that
    want a flooring convention (log of a density matrix) apply it to ``f``.
    """
    sd = a if isinstance(a, SpectralDecomposition) else eigh(a)
    values = np.array([f(lam) for lam in sd.eigenvalues], dtype=complex)
    bad = ~np.isfinite(values)
    if bad.any():
        lam = sd.eigenvalues[bad][0]
        raise ValueError(f"function undefined at eigenvalue {lam!r}")
    u = sd.eigenvectors
    return HermitianOperator((u * values) @ u.conj().T, hermitian=bool(np.max(np.abs(values.imag)) <= 1e-14))


def operator_norm(a):
    """Largest singular value; for Hermitian input the largest |eigenvalue|."""
    if isinstance(a, HermitianOperator) and a.hermitian:
        return float(np.max(np.abs(np.linalg.eigvalsh(a.entries))))
    entries = a.entries if isinstance(a, HermitianOperator) else np.asarray(a)
    return float(np.linalg.svd(entries, compute_uv=False)[0])


def commutator_norm(a, b):
    """Operator norm of AB - BA."""
    ae = a.entries if isinstance(a, HermitianOperator) else np.asarray(a)
    be = b.entries if isinstance(b, HermitianOperator) else np.asarray(b)
    if ae.shape != be.shape:
        raise ValueError(f"dimension mismatch: {ae.shape} vs {be.shape}")
    comm = ae @ be - be @ ae
    herm_a = not isinstance(a, HermitianOperator) or a.hermitian
    herm_b = not isinstance(b, HermitianOperator) or b.hermitian
    if herm_a and herm_b:
        # [A,B] is anti-Hermitian, so i[A,B] is Hermitian and cheaper than SVD.
        return float(np.max(np.abs(np.linalg.eigvalsh(1j * comm))))
    return float(np.linalg.svd(comm, compute_uv=False)[0])
