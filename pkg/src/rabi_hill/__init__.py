"""Spectrum of the quantum Rabi model from its Hill determinant.

H = a^dag a + g sigma_z (a + a^dag) + delta sigma_x, with x = E + g^2.
"""

from .errors import (
    NegativeIntegerGuardError,
    NotConvergedError,
    NullSpaceNotFoundError,
    RabiHillError,
    ResidualTooLargeError,
    ZeroCoefficientError,
)
from .recurrence import (
    DEFAULT_OPTIONS,
    HillEvaluation,
    MinimalSolution,
    ModelParams,
    SolverOptions,
    coefficients,
    finite_determinant,
    hill_determinant,
    minimal_solution,
    tail_limit,
)
from .spectrum import (
    CaseLabel,
    ExceptionalReport,
    RootRecord,
    classify_exceptional,
    exceptional_eigenvectors,
    scan_regular,
)
from .oracle import build_matrix, convergence_study, eigenvalues, oracle_spectrum, validate_records
from .atlas import (
    FieldKind,
    GridRegion,
    axis_intercepts,
    classify_branches,
    extract_zero_set,
    sample_field,
)

__version__ = "0.1.0"
