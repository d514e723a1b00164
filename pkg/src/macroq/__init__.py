"""macroq: finite-size numerics for quantum macrostates.

Subpackages by theme:

- ``operators``: dense Hermitian operators, spectral decompositions, tensor
  embeddings of site-local observables.
- ``macrostates``: spectral window projections, per-site entropy of a
  projection, normalized-trace expectations, noncommutative polynomial
  concentration diagnostics.
- ``ensembles``: Gibbs states over macroscopic observables, the lambda(x)
  Newton solver, entropies, exponential concentration rates, equipartition
  windows, generating functions, channel contraction checks.
- ``kac``: the exact quantum Kac ring, its macroscopic map, entropy
  monotonicity, and the reduced-observable counterexample.
- ``experiments``/``cli``: batch drivers producing reproducible CSV tables.
"""

__version__ = "0.1.0"

from .operators import (  # noqa: E402,F401
    PAULI,
    SIGMA0,
    SIGMA1,
    SIGMA2,
    SIGMA3,
    DensityMatrix,
    HermitianOperator,
    SpectralDecomposition,
    average_observable,
    commutator_norm,
    eigh,
    embed_site_operator,
    matrix_function,
    operator_norm,
)
from .macrostates import (  # noqa: E402,F401
    MacroObservableSet,
    MacroValue,
    NoncommutativePolynomial,
    WindowSpec,
    concentration_diagnostic,
    delta_schedule,
    h_from_rank,
    h_function,
    joint_window_projection,
    magnetization_set,
    microcanonical_expectation,
    nc_concentration_check,
    product_moment_bound,
    window_projection,
    window_rank,
)
from .ensembles import (  # noqa: E402,F401
    GibbsSpec,
    LambdaSolveError,
    aep_check,
    apply_channel,
    concentration_rate,
    cp_contraction_check,
    equipartition_projection,
    generating_function,
    gibbs_state,
    h_can1,
    pressure,
    psi_prime_zero,
    relative_entropy,
    solve_lambda,
    von_neumann_entropy,
    window_mass,
)
from .kac import (  # noqa: E402,F401
    BlochState,
    KacConfig,
    KacMicroState,
    Trajectory,
    counterexample_run,
    h_kac,
    h_theorem_check,
    macro_map,
    macro_trajectory,
    micro_macro_readout,
    micro_step,
    micro_trajectory,
    micro_vs_macro_validation,
    recurrence_probe,
    sample_xi,
    scatterer_unitary,
)
