"""Solver and verification suite for the positive Hessian quotient equation
sigma_2/sigma_1 = exp(integral of u + Psi) on flat and conformal 2-tori."""

from .errors import (
    AdmissibilityError,
    ConfigError,
    GeometryError,
    GridMismatchError,
    HessquotError,
    NonConvergenceError,
    UnsupportedConfigurationError,
)
from .grid import (
    ConnectionField,
    GeometryConstants,
    Grid,
    ScalarField,
    Sym2Field,
    connection_from_metric,
    covariant_hessian,
    geometry_constants,
    integrate,
    read_field,
    write_field,
)
from .kernel import (
    EigenPair2D,
    KernelDerivatives,
    admissibility_margin,
    concavity_identity,
    derivatives,
    eigen_decompose,
    k_concavity_gap,
    quotient_value,
    sigma_quotient,
)

__all__ = [name for name in dir() if not name.startswith("_")]
