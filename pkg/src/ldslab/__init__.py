"""Single-trajectory identification of linear dynamical systems.

``x_{t+1} = A x_t + eta_t`` is simulated from seeded Gaussian noise, ``A`` is
estimated by ordinary least squares, and the estimation error is related to
the geometry of the data matrix: its singular values and the distances of its
rows to the span of the other rows.
"""

from .errors import (
    BandUndefinedError,
    ConfigError,
    ContainmentError,
    ConvergenceError,
    DimensionError,
    DomainError,
    EmptySummaryError,
    InstabilityError,
    LabError,
    PowerOverflowError,
    RankError,
    StateOverflowError,
)
from .lab import ExperimentConfig, ExperimentResult, run_experiment, summarize
from .linalg_core import (
    condition_number,
    frobenius_norm,
    operator_norm,
    orthonormal_rowspace_basis,
    row_hyperplane_distances,
    singular_values,
    solve_lyapunov,
    spectral_radius,
)
from .ols import (
    diag_error_band,
    estimate_ols,
    ols_error_bounds,
    ols_error_identity,
    ols_report,
    restrict_to_rowspace,
)
from .system_builder import (
    BlockSpec,
    SystemSpec,
    build_jordan_block,
    build_system,
    jordan_block_power,
    jordan_power_norm_bounds,
    predicted_peak_iteration,
    random_orthogonal,
)
from .trajectory import assemble, derive_trial_seed, simulate, talagrand_variance_class

__version__ = "0.1.0"
