"""Independent brute-force oracles.

Finite-difference differentiation of the quotient operator in eigenvalue
space, and manufactured problems whose exact continuum solution is known,
used to validate closed forms and the solver before trusting either.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError
from .grid import Grid, ScalarField, Sym2Field
from .solver import Homotopy, ProblemSpec, Tolerances
from .kernel import quotient_value, _check_positive

# Standard sqrt/cbrt-of-epsilon scaling, fixed for reproducibility.
FD_STEP_FIRST = 1e-5
FD_STEP_SECOND = 1e-4


def fd_derivative_oracle(lam):
    """Central-difference first and second derivatives of F = 1/sigma_1(1/lam).

    Returns (Fi_fd, Fij_fd) for comparison against the closed forms.
    """
    lam = _check_positive(lam)
    n = lam.size
    h1 = FD_STEP_FIRST * lam
    h2 = FD_STEP_SECOND * lam
    Fi = np.empty(n)
    for i in range(n):
        lp, lm = lam.copy(), lam.copy()
        lp[i] += h1[i]
        lm[i] -= h1[i]
        Fi[i] = (quotient_value(lp) - quotient_value(lm)) / (2.0 * h1[i])
    Fij = np.empty((n, n))
    F0 = quotient_value(lam)
    for i in range(n):
        lp, lm = lam.copy(), lam.copy()
        lp[i] += h2[i]
        lm[i] -= h2[i]
        Fij[i, i] = (quotient_value(lp) - 2.0 * F0 + quotient_value(lm)) / h2[i] ** 2
        for j in range(i + 1, n):
            lpp, lpm = lp.copy(), lp.copy()
            lmp, lmm = lm.copy(), lm.copy()
            lpp[j] += h2[j]
            lpm[j] -= h2[j]
            lmp[j] += h2[j]
            lmm[j] -= h2[j]
            val = (
                quotient_value(lpp)
                - quotient_value(lpm)
                - quotient_value(lmp)
                + quotient_value(lmm)
            ) / (4.0 * h2[i] * h2[j])
            Fij[i, j] = Fij[j, i] = val
    return Fi, Fij


@dataclass(frozen=True)
class ManufacturedProblem:
    """A problem whose exact continuum solution u_star is known.

    psi is computed from the analytic Hessian of u_star, so the discrete
    solve recovers u_star up to O(h^2) truncation.
    """

    u_star: ScalarField
    spec: ProblemSpec
    family: str
    a: float
    b: float


_FAMILIES = ("separable", "anisotropic")


def make_manufactured(
    family,
    grid,
    a=0.1,
    b=0.1,
    margin_floor=0.1,
    tolerances=Tolerances(),
    homotopy=Homotopy(),
):
    """Build a manufactured problem on the flat torus with chi = identity.

    separable:   u* = a cos x + b cos y
    anisotropic: u* = a cos x + b cos 2y  (produces regions with a large
                 eigenvalue ratio while staying admissible)
    """
    if family not in _FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {_FAMILIES}")
    x, y = grid.coords()
    if family == "separable":
        u_star = a * np.cos(x) + b * np.cos(y)
        d1 = 1.0 - a * np.cos(x)
        d2 = 1.0 - b * np.cos(y)
    else:
        u_star = a * np.cos(x) + b * np.cos(2.0 * y)
        d1 = 1.0 - a * np.cos(x)
        d2 = 1.0 - 4.0 * b * np.cos(2.0 * y)
    margin = min(float(np.min(d1)), float(np.min(d2)))
    if margin < margin_floor:
        raise AdmissibilityError(
            f"amplitudes a={a}, b={b} leave margin {margin:.3f} < {margin_floor}"
        )
    # Continuum integral of u* vanishes for these harmonics, so psi is just
    # log of the analytic quotient.
    psi = np.log(d1 * d2 / (d1 + d2))
    spec = ProblemSpec(
        g=Sym2Field.identity(grid),
        chi=Sym2Field.identity(grid),
        psi=ScalarField(grid, psi),
        tolerances=tolerances,
        homotopy=homotopy,
    )
    return ManufacturedProblem(
        u_star=ScalarField(grid, u_star), spec=spec, family=family, a=a, b=b
    )
