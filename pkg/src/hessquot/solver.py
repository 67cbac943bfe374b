"""Continuation solver for log F(chi + hess u) = integral(u) + t Psi.

The corrector is damped Newton on the discrete residual, with the exact
linearization (1/F) a^{rs} nabla^2_{rs} - integral(.).  The nonlocal mean
term makes the discrete operator sparse-plus-rank-one; the Krylov solve
applies the rank-one exactly in the matvec and preconditions with a sparse
LU of the volume-shifted local part.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csc_matrix, csr_matrix
from scipy.sparse.linalg import LinearOperator, gmres, splu

from .errors import AdmissibilityError, GeometryError, NonConvergenceError
from .grid import (
    ConnectionField,
    ScalarField,
    Sym2Field,
    connection_from_metric,
    covariant_hessian,
    dx,
    dy,
    integrate,
)
from .kernel import pencil_eigenvalues, pencil_eigenvectors

# Spectral gaps below this fraction of lambda1 switch the coefficient
# tensor to its isotropic limit.
_DEGENERATE_GAP = 1e-8

TRACE_HEADER = "t,newton_iters,residual_sup,adm_margin,lambda1_max,osc_u,grad_sup,integral_u"


@dataclass(frozen=True)
class Tolerances:
    newton_residual_sup: float = 1e-10
    linear_rel: float = 1e-10
    admissibility_floor: float = 1e-8

    def __post_init__(self):
        if min(self.newton_residual_sup, self.linear_rel, self.admissibility_floor) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class Homotopy:
    dt_init: float = 0.1
    dt_min: float = 1e-4
    max_newton: int = 30

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= 1.0):
            raise ValueError("need dt_min <= dt_init <= 1")


@dataclass(frozen=True)
class ProblemSpec:
    """Equation data for one solve: metric, chi, Psi and solver knobs."""

    g: Sym2Field
    chi: Sym2Field
    psi: ScalarField
    tolerances: Tolerances = Tolerances()
    homotopy: Homotopy = Homotopy()
    conn: ConnectionField | None = None

    def __post_init__(self):
        self.g.require_spd("metric")
        if self.conn is None:
            object.__setattr__(self, "conn", connection_from_metric(self.g))

    @property
    def grid(self):
        return self.g.grid


@dataclass(frozen=True)
class TraceStep:
    t: float
    newton_iters: int
    residual_sup: float
    adm_margin: float
    lambda1_max: float
    osc_u: float
    grad_sup: float
    integral_u: float


@dataclass
class ContinuationTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(TRACE_HEADER + "\n")
        for s in self.steps:
            buf.write(
                f"{s.t!r},{s.newton_iters},{s.residual_sup!r},{s.adm_margin!r},"
                f"{s.lambda1_max!r},{s.osc_u!r},{s.grad_sup!r},{s.integral_u!r}\n"
            )
        return buf.getvalue()


class _State:
    """Per-iterate pencil data shared between residual and linearization."""

    def __init__(self, u, spec):
        self.u = u
        g, chi = spec.g, spec.chi
        gt = chi + covariant_hessian(u, g, spec.conn)
        self.gt = gt
        self.lam1, self.lam2 = pencil_eigenvalues(
            g.a11, g.a12, g.a22, gt.a11, gt.a12, gt.a22
        )
        self.margin = float(np.min(self.lam2))

    def quotient(self):
        return self.lam1 * self.lam2 / (self.lam1 + self.lam2)


def residual(u, t, spec):
    """Pointwise G(u) = log F(lam(g^-1 (chi + hess u))) - integral(u) - t Psi."""
    state = _State(u, spec)
    if state.margin <= spec.tolerances.admissibility_floor:
        raise AdmissibilityError(
            f"iterate inadmissible: margin {state.margin:.3e} at t={t}"
        )
    return _residual_from_state(state, t, spec)


def _residual_from_state(state, t, spec):
    vals = (
        np.log(state.quotient())
        - integrate(state.u, spec.g)
        - t * spec.psi.values
    )
    return ScalarField(spec.grid, vals)


class TangentOperator:
    """Linearization of the residual at an admissible iterate.

    Applies delta_u -> (1/F) a^{rs} (nabla^2 delta_u)_{rs} - integral(delta_u)
    with a = sum_i F^{ii} e_i e_i^T in the g-orthonormal eigenframe.  The
    local part is a sparse 9-point matrix; the mean term is rank one.
    """

    def __init__(self, state, spec):
        g = spec.g
        grid = spec.grid
        n, h = grid.n, grid.h
        lam1, lam2 = state.lam1, state.lam2
        F = state.quotient()
        Fi1 = F * F / lam1**2
        Fi2 = F * F / lam2**2
        gt = state.gt
        e1x, e1y, e2x, e2y = pencil_eigenvectors(
            g.a11, g.a12, g.a22, gt.a11, gt.a12, gt.a22, lam1, lam2
        )
        a11 = Fi1 * e1x * e1x + Fi2 * e2x * e2x
        a12 = Fi1 * e1x * e1y + Fi2 * e2x * e2y
        a22 = Fi1 * e1y * e1y + Fi2 * e2y * e2y
        # Isotropic limit where the spectrum nearly degenerates.
        deg = (lam1 - lam2) < _DEGENERATE_GAP * lam1
        if np.any(deg):
            lbar = 0.5 * (lam1 + lam2)
            ginv = g.inverse()
            iso = F * F / lbar**2
            a11 = np.where(deg, iso * ginv.a11, a11)
            a12 = np.where(deg, iso * ginv.a12, a12)
            a22 = np.where(deg, iso * ginv.a22, a22)
        cxx = a11 / F
        cxy = a12 / F
        cyy = a22 / F
        # First-order coefficients from the Christoffel part of the Hessian.
        gam = spec.conn.gamma
        b1 = -(
            cxx * gam[0, 0, 0] + 2.0 * cxy * gam[0, 0, 1] + cyy * gam[0, 1, 1]
        )
        b2 = -(
            cxx * gam[1, 0, 0] + 2.0 * cxy * gam[1, 0, 1] + cyy * gam[1, 1, 1]
        )

        idx = np.arange(n * n).reshape(n, n)
        entries = {
            (0, 0): -2.0 * cxx / h**2 - 2.0 * cyy / h**2,
            (1, 0): cxx / h**2 + b1 / (2.0 * h),
            (-1, 0): cxx / h**2 - b1 / (2.0 * h),
            (0, 1): cyy / h**2 + b2 / (2.0 * h),
            (0, -1): cyy / h**2 - b2 / (2.0 * h),
            (1, 1): cxy / (2.0 * h**2),
            (-1, -1): cxy / (2.0 * h**2),
            (1, -1): -cxy / (2.0 * h**2),
            (-1, 1): -cxy / (2.0 * h**2),
        }
        rows, cols, data = [], [], []
        for (di, dj), coef in entries.items():
            rows.append(idx.ravel())
            cols.append(np.roll(np.roll(idx, -di, axis=0), -dj, axis=1).ravel())
            data.append(coef.ravel())
        self.matrix = csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * n, n * n),
        )
        self.weights = (h * h * np.sqrt(g.det())).ravel()
        self.volume = float(np.sum(self.weights))
        self.grid = grid
        self._lu = None
        self._linear_rel = spec.tolerances.linear_rel

    def apply(self, v):
        v = np.asarray(v, dtype=float).ravel()
        return self.matrix @ v - float(self.weights @ v)

    def apply_field(self, w):
        return ScalarField(
            self.grid, self.apply(w.values.ravel()).reshape(self.grid.n, self.grid.n)
        )

    def _precondition(self):
        if self._lu is None:
            n2 = self.matrix.shape[0]
            shifted = self.matrix - self.volume * csr_matrix(
                (np.ones(n2), (np.arange(n2), np.arange(n2))), shape=(n2, n2)
            )
            self._lu = splu(csc_matrix(shifted))
        return self._lu

    def solve(self, rhs):
        """Preconditioned restarted GMRES, rank-one term applied in the matvec."""
        rhs = np.asarray(rhs, dtype=float).ravel()
        n2 = rhs.size
        lu = self._precondition()
        op = LinearOperator((n2, n2), matvec=self.apply)
        pre = LinearOperator((n2, n2), matvec=lu.solve)
        sol, info = gmres(
            op, rhs, M=pre, rtol=self._linear_rel, atol=0.0, restart=50, maxiter=200
        )
        if info != 0:
            raise NonConvergenceError(f"linear solve did not converge (info={info})")
        return sol


def linearize(u, spec):
    """Tangent operator of the residual at u; raises off the admissible cone."""
    state = _State(u, spec)
    if state.margin <= spec.tolerances.admissibility_floor:
        raise AdmissibilityError(f"iterate inadmissible: margin {state.margin:.3e}")
    return TangentOperator(state, spec)


def newton_solve_at_t(u0, t, spec):
    """Damped Newton corrector at fixed homotopy parameter t."""
    tol = spec.tolerances
    state = _State(u0, spec)
    if state.margin <= tol.admissibility_floor:
        raise AdmissibilityError(f"start inadmissible: margin {state.margin:.3e}")
    u = u0
    r = _residual_from_state(state, t, spec)
    rsup = float(np.max(np.abs(r.values)))
    for it in range(spec.homotopy.max_newton):
        if rsup <= tol.newton_residual_sup:
            return u, it
        op = TangentOperator(state, spec)
        delta = op.solve(-r.values.ravel()).reshape(spec.grid.n, spec.grid.n)
        s = 1.0
        accepted = False
        while s >= 2.0**-20:
            cand = ScalarField(spec.grid, u.values + s * delta)
            cand_state = _State(cand, spec)
            if cand_state.margin > tol.admissibility_floor:
                cand_r = _residual_from_state(cand_state, t, spec)
                cand_sup = float(np.max(np.abs(cand_r.values)))
                if cand_sup < rsup:
                    u, state, r, rsup = cand, cand_state, cand_r, cand_sup
                    accepted = True
                    break
            s *= 0.5
        if not accepted:
            raise NonConvergenceError(f"line search exhausted at t={t}", last_t=t)
    if rsup <= tol.newton_residual_sup:
        return u, spec.homotopy.max_newton
    raise NonConvergenceError(
        f"Newton did not converge at t={t} (residual {rsup:.3e})", last_t=t
    )


def _trace_step(u, t, iters, state, spec):
    g = spec.g
    ginv = g.inverse()
    ux, uy = u.gradient()
    grad2 = ginv.a11 * ux * ux + 2.0 * ginv.a12 * ux * uy + ginv.a22 * uy * uy
    return TraceStep(
        t=t,
        newton_iters=iters,
        residual_sup=float(
            np.max(np.abs(_residual_from_state(state, t, spec).values))
        ),
        adm_margin=state.margin,
        lambda1_max=float(np.max(state.lam1)),
        osc_u=float(np.max(u.values) - np.min(u.values)),
        grad_sup=float(np.sqrt(np.max(grad2))),
        integral_u=integrate(u, g),
    )


def initial_constant(spec):
    """Constant start for t = 0: zero the g-weighted mean of the residual.

    Exact root whenever F(lam(g^-1 chi)) is spatially constant (the trivial
    constant solution); otherwise Newton finishes the t = 0 solve.
    """
    lam1, lam2 = pencil_eigenvalues(
        spec.g.a11, spec.g.a12, spec.g.a22, spec.chi.a11, spec.chi.a12, spec.chi.a22
    )
    if np.min(lam2) <= 0.0:
        raise GeometryError("chi must be positive definite for the t=0 start")
    logF0 = ScalarField(spec.grid, np.log(lam1 * lam2 / (lam1 + lam2)))
    vol = integrate(ScalarField.constant(spec.grid, 1.0), spec.g)
    return integrate(logF0, spec.g) / (vol * vol)


def continuation_solve(spec, initial_perturbation=None):
    """Homotopy in t from the constant t = 0 root to t = 1.

    Doubles dt after one-step Newton successes, halves on failure, and fails
    hard below dt_min.  Returns the solution at t = 1 and the trace of
    accepted steps.
    """
    hp = spec.homotopy
    c0 = initial_constant(spec)
    u = ScalarField.constant(spec.grid, c0)
    if initial_perturbation is not None:
        u = u + initial_perturbation
    u, iters = newton_solve_at_t(u, 0.0, spec)
    trace = ContinuationTrace()
    trace.steps.append(_trace_step(u, 0.0, iters, _State(u, spec), spec))
    t = 0.0
    dt = hp.dt_init
    while t < 1.0:
        tt = min(t + dt, 1.0)
        try:
            unew, iters = newton_solve_at_t(u, tt, spec)
        except (NonConvergenceError, AdmissibilityError):
            dt *= 0.5
            if dt < hp.dt_min:
                raise NonConvergenceError(
                    f"homotopy step underflow at t={t}", last_t=t
                ) from None
            continue
        u, t = unew, tt
        trace.steps.append(_trace_step(u, t, iters, _State(u, spec), spec))
        if iters <= 1:
            dt = min(2.0 * dt, 0.5)
    return u, trace


def solve_up_to_constant(f, spec):
    """Solve F(u) = c f for the unique admissible u and constant c = e^{integral u}."""
    if np.any(f.values <= 0.0):
        raise ValueError("f must be positive everywhere")
    spec_log = replace(spec, psi=ScalarField(spec.grid, np.log(f.values)))
    u, trace = continuation_solve(spec_log)
    c = float(np.exp(integrate(u, spec.g)))
    return u, c, trace


def reduce_to_positive_chi(chi, v, psi, g, conn=None):
    """Shift the problem by an admissible v so chi becomes positive definite.

    Returns (chi + hess v, psi + integral v); a solution of the reduced
    problem plus v solves the original.
    """
    if conn is None:
        conn = connection_from_metric(g)
    chi_new = chi + covariant_hessian(v, g, conn)
    lam1, lam2 = pencil_eigenvalues(
        g.a11, g.a12, g.a22, chi_new.a11, chi_new.a12, chi_new.a22
    )
    if np.min(lam2) <= 0.0:
        i, j = np.unravel_index(int(np.argmin(lam2)), lam2.shape)
        raise AdmissibilityError(
            f"v is not admissible for chi: worst node ({i}, {j}), "
            f"margin {float(np.min(lam2)):.3e}"
        )
    psi_new = psi + integrate(v, g)
    return chi_new, psi_new
