"""Numerical certification of the a priori estimates and proof machinery.

Checks the C^0 and C^1 bounds, the third-derivative commutation identity,
the eigenvector-field calculus, the structural lower bound on the
linearized operator acting on log lambda_1, and the extremal system at the
maximum of the test quantity.  Everything operates on immutable fields and
reports (bound, observed, margin, pass) tuples; theorems are asserted,
existential constants are only monitored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, UnsupportedConfigurationError
from .grid import (
    ConnectionField,
    ScalarField,
    Sym2Field,
    covariant_hessian,
    dx,
    dxx,
    dxy,
    dy,
    dyy,
)
from .kernel import pencil_eigenvalues, pencil_eigenvectors

REPORT_HEADER = "name,bound,observed,margin,pass,node_i,node_j"

# Default stencil constant for the commutation bound K_stencil * h^2,
# calibrated on the conformal manufactured family at N = 64.
COMMUTATION_STENCIL_CONSTANT = 2.0


@dataclass(frozen=True)
class EstimateReport:
    """One (bound, observed) comparison with its extremal location."""

    name: str
    bound: float
    observed: float
    location: tuple[int, int] = (-1, -1)

    @property
    def margin(self):
        return self.bound - self.observed

    @property
    def passed(self):
        return self.margin >= -1e-9 * (1.0 + abs(self.bound))

    def csv_row(self):
        return (
            f"{self.name},{self.bound!r},{self.observed!r},{self.margin!r},"
            f"{self.passed},{self.location[0]},{self.location[1]}"
        )


def append_reports(path, reports):
    import os

    new = not os.path.exists(path)
    with open(path, "a") as fh:
        if new:
            fh.write(REPORT_HEADER + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")


@dataclass(frozen=True)
class MonitorConfig:
    """Knobs of the test-quantity and eigenvector-field analyses.

    phi_slope is the constant slope A of the linear weight phi(s) = A s;
    gap_floor is the minimal spectral gap, as a fraction of the local
    lambda_1, below which eigenvector-based quantities are masked.
    """

    phi_slope: float = 1.0
    gap_floor: float = 0.1

    def __post_init__(self):
        if self.phi_slope < 0.0 or self.gap_floor <= 0.0:
            raise ValueError("phi_slope must be >= 0 and gap_floor positive")


def _require_flat(g):
    if (
        np.max(np.abs(g.a11 - 1.0)) > 1e-12
        or np.max(np.abs(g.a12)) > 1e-12
        or np.max(np.abs(g.a22 - 1.0)) > 1e-12
    ):
        raise UnsupportedConfigurationError(
            "this analysis is implemented for the flat metric g = identity only"
        )


def _pencil_frames(g, gt):
    lam1, lam2 = pencil_eigenvalues(g.a11, g.a12, g.a22, gt.a11, gt.a12, gt.a22)
    e1x, e1y, e2x, e2y = pencil_eigenvectors(
        g.a11, g.a12, g.a22, gt.a11, gt.a12, gt.a22, lam1, lam2
    )
    return lam1, lam2, e1x, e1y, e2x, e2y


def _check_admissible(u, g, chi, conn):
    gt = chi + covariant_hessian(u, g, conn)
    lam1, lam2 = pencil_eigenvalues(g.a11, g.a12, g.a22, gt.a11, gt.a12, gt.a22)
    if np.min(lam2) <= 0.0:
        raise AdmissibilityError(
            "hypothesis violated: chi + hess u is not positive definite"
        )
    return gt, lam1, lam2


# ---------------------------------------------------------------------------
# C^0 and C^1 estimates
# ---------------------------------------------------------------------------

def check_c0(u, consts, g=None, chi=None, conn=None):
    """osc(u) against C(chi, g) diam^2 / 2.

    If (g, chi, conn) are supplied the proposition's admissibility
    hypothesis is verified first.
    """
    if g is not None:
        _check_admissible(u, g, chi, conn)
    i, j = np.unravel_index(int(np.argmax(u.values)), u.values.shape)
    observed = float(np.max(u.values) - np.min(u.values))
    bound = consts.c_upper * consts.diameter**2 / 2.0
    return EstimateReport("c0_oscillation", bound, observed, (int(i), int(j)))


def check_c1(u, g, consts, chi=None, conn=None):
    """sup |grad u|_g^2 against (C(chi, g) diam)^2."""
    if chi is not None:
        _check_admissible(u, g, chi, conn)
    ux, uy = u.gradient()
    ginv = g.inverse()
    grad2 = ginv.a11 * ux * ux + 2.0 * ginv.a12 * ux * uy + ginv.a22 * uy * uy
    i, j = np.unravel_index(int(np.argmax(grad2)), grad2.shape)
    observed = float(np.max(grad2))
    bound = (consts.c_upper * consts.diameter) ** 2
    return EstimateReport("c1_gradient_sq", bound, observed, (int(i), int(j)))


# ---------------------------------------------------------------------------
# third-derivative commutation
# ---------------------------------------------------------------------------

def _covariant_third(u, g, conn):
    """All components nabla_c T_ab of the covariant derivative of the Hessian."""
    grid = u.grid
    h = grid.h
    T = covariant_hessian(u, g, conn)
    comp = np.empty((2, 2, grid.n, grid.n))
    comp[0, 0] = T.a11
    comp[0, 1] = comp[1, 0] = T.a12
    comp[1, 1] = T.a22
    dT = np.empty((2, 2, 2, grid.n, grid.n))
    for a in range(2):
        for b in range(2):
            dT[a, b, 0] = dx(comp[a, b], h)
            dT[a, b, 1] = dy(comp[a, b], h)
    gam = conn.gamma
    P = np.empty_like(dT)
    for a in range(2):
        for b in range(2):
            for c in range(2):
                val = dT[a, b, c].copy()
                for m in range(2):
                    val -= gam[m, c, a] * comp[m, b] + gam[m, c, b] * comp[a, m]
                P[a, b, c] = val
    return P


def check_commutation(u, g, conn, stencil_constant=COMMUTATION_STENCIL_CONSTANT):
    """Third-derivative commutation u_ijk = u_kij + curvature * grad u.

    The observed value is the worst node-wise mismatch over all index
    combinations; the bound is stencil_constant * h^2, calibrated on the
    manufactured conformal family.
    """
    P = _covariant_third(u, g, conn)
    h = u.grid.h
    du = [dx(u.values, h), dy(u.values, h)]
    gcomp = np.empty((2, 2, u.grid.n, u.grid.n))
    gcomp[0, 0] = g.a11
    gcomp[0, 1] = gcomp[1, 0] = g.a12
    gcomp[1, 1] = g.a22
    K = conn.gauss
    worst = np.zeros_like(u.values)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                lhs = P[i, j, k]
                rhs = P[k, i, j]
                curv = -K * (du[k] * gcomp[i, j] - du[j] * gcomp[i, k])
                worst = np.maximum(worst, np.abs(lhs - rhs - curv))
    i, j = np.unravel_index(int(np.argmax(worst)), worst.shape)
    return EstimateReport(
        "commutation_mismatch",
        stencil_constant * h * h,
        float(np.max(worst)),
        (int(i), int(j)),
    )


# ---------------------------------------------------------------------------
# test quantities W and Q-tilde
# ---------------------------------------------------------------------------

def test_quantities(u, g, chi, conn, cfg):
    """W = log lambda_1 and Q-tilde = W + A/2 (d_V u)^2, with its argmax.

    The sup over unit vectors realizing lambda_1 reduces to the
    eigendirection where the eigenvalue is simple; at near-degenerate nodes
    Q-tilde falls back to W.
    """
    gt, lam1, lam2 = _check_admissible(u, g, chi, conn)
    _, _, e1x, e1y, _, _ = _pencil_frames(g, gt)
    W = np.log(lam1)
    ux, uy = u.gradient()
    uV = e1x * ux + e1y * uy
    unmasked = (lam1 - lam2) >= cfg.gap_floor * lam1
    Q = np.where(unmasked, W + cfg.phi_slope * 0.5 * uV * uV, W)
    i, j = np.unravel_index(int(np.argmax(Q)), Q.shape)
    return (
        ScalarField(u.grid, W),
        ScalarField(u.grid, Q),
        (int(i), int(j)),
    )


# ---------------------------------------------------------------------------
# eigenvector-field calculus (flat metric)
# ---------------------------------------------------------------------------

@dataclass
class EigvecFieldReport:
    """Formula-vs-finite-difference comparison of eigenvector derivatives."""

    errors: dict[str, float]
    raw_errors: dict[str, float]
    masked_nodes: int
    tested_nodes: int

    @property
    def max_error(self):
        return max(self.errors.values()) if self.errors else 0.0


_OFFSETS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)]


def _aligned_components(e1x, e1y, e2x, e2y):
    """Frame components of the sign-aligned eigenvector field at all 9 offsets.

    Returns dict offset -> (V1, V2) where Vk is the component along the
    center node's k-th frame vector of the neighbor's lambda_1 eigenvector,
    sign-aligned with the center vector.
    """
    out = {}
    for di, dj in _OFFSETS:
        sx = np.roll(np.roll(e1x, -di, axis=0), -dj, axis=1)
        sy = np.roll(np.roll(e1y, -di, axis=0), -dj, axis=1)
        dot = sx * e1x + sy * e1y
        sgn = np.where(dot < 0.0, -1.0, 1.0)
        ax, ay = sx * sgn, sy * sgn
        out[(di, dj)] = (e1x * ax + e1y * ay, e2x * ax + e2y * ay)
    return out


def _fd_tables(vals, h):
    """First and second Cartesian partials from a 9-offset value table."""
    c = vals[(0, 0)]
    first = [
        (vals[(1, 0)] - vals[(-1, 0)]) / (2.0 * h),
        (vals[(0, 1)] - vals[(0, -1)]) / (2.0 * h),
    ]
    second = np.empty((2, 2) + c.shape)
    second[0, 0] = (vals[(1, 0)] - 2.0 * c + vals[(-1, 0)]) / h**2
    second[1, 1] = (vals[(0, 1)] - 2.0 * c + vals[(0, -1)]) / h**2
    second[0, 1] = second[1, 0] = (
        vals[(1, 1)] - vals[(1, -1)] - vals[(-1, 1)] + vals[(-1, -1)]
    ) / (4.0 * h**2)
    return first, second


def _erode(mask):
    out = mask.copy()
    for di, dj in _OFFSETS:
        out &= np.roll(np.roll(mask, -di, axis=0), -dj, axis=1)
    return out


def _frame_tensor_derivatives(gt, frames, h):
    """Frame-transformed first and second derivatives of gtilde.

    Returns (gtd1, gtd2): gtd1[a, b, i] = gtilde_{ab,i} and
    gtd2[a, b, i] = gtilde_{ab,ii} in the per-node eigenframe (directional
    derivatives along the frame vectors; valid on the flat torus where
    global coordinates are normal everywhere).
    """
    ex = np.stack([frames[0], frames[2]])  # ex[a] = x-component of frame vector a
    ey = np.stack([frames[1], frames[3]])
    comp = {
        (0, 0): gt.a11,
        (0, 1): gt.a12,
        (1, 1): gt.a22,
    }
    shape = gt.a11.shape
    d1 = np.empty((2, 2, 2) + shape)
    d2 = np.empty((2, 2, 2) + shape)
    # Cartesian partials of each independent component.
    cart1 = {}
    cart2 = {}
    for (p, q), arr in comp.items():
        cart1[(p, q)] = [dx(arr, h), dy(arr, h)]
        cart2[(p, q)] = [
            [dxx(arr, h), dxy(arr, h)],
            [dxy(arr, h), dyy(arr, h)],
        ]
    def c1(p, q, c):
        key = (min(p, q), max(p, q))
        return cart1[key][c]

    def c2(p, q, c, d):
        key = (min(p, q), max(p, q))
        return cart2[key][c][d]

    for a in range(2):
        for b in range(2):
            for i in range(2):
                acc1 = np.zeros(shape)
                acc2 = np.zeros(shape)
                for p in range(2):
                    for q in range(2):
                        w = (ex[a] if p == 0 else ey[a]) * (ex[b] if q == 0 else ey[b])
                        for c in range(2):
                            eic = ex[i] if c == 0 else ey[i]
                            acc1 += w * eic * c1(p, q, c)
                            for dd in range(2):
                                eid = ex[i] if dd == 0 else ey[i]
                                acc2 += w * eic * eid * c2(p, q, c, dd)
                d1[a, b, i] = acc1
                d2[a, b, i] = acc2
    return d1, d2


def eigvec_field_checks(u, g, chi, cfg):
    """Compare the closed-form eigenvector derivatives against direct FD.

    Flat metric only.  V^k_i and V^k_{ii} from the derivative formulas of
    the pencil eigenproblem are checked against centered differences of the
    sign-aligned eigenvector field on nodes where the spectral gap clears
    gap_floor (eroded so all stencil neighbors are gapped too).
    """
    _require_flat(g)
    conn = ConnectionField.flat(u.grid)
    gt, lam1, lam2 = _check_admissible(u, g, chi, conn)
    frames = _pencil_frames(g, gt)[2:]
    e1x, e1y, e2x, e2y = frames
    h = u.grid.h

    mask = _erode((lam1 - lam2) >= cfg.gap_floor * lam1)
    tested = int(np.count_nonzero(mask))
    masked = mask.size - tested
    if tested == 0:
        return EigvecFieldReport({}, {}, masked, 0)

    gtd1, gtd2 = _frame_tensor_derivatives(gt, frames, h)
    gap = lam1 - lam2
    # Formulas: V^1_i = 0; V^2_i = gtilde_{12,i}/gap;
    # V^2_{ii} = (2 V^2_i gtilde_{22,i} + gtilde_{12,ii} - 2 gtilde_{11,i} V^2_i)/gap;
    # V^1_{ii} = -(V^2_i)^2.
    V2 = [gtd1[0, 1, i] / gap for i in range(2)]
    formula = {}
    for i in range(2):
        formula[f"V1_{i + 1}"] = np.zeros_like(lam1)
        formula[f"V2_{i + 1}"] = V2[i]
        formula[f"V1_{i + 1}{i + 1}"] = -V2[i] ** 2
        formula[f"V2_{i + 1}{i + 1}"] = (
            2.0 * V2[i] * gtd1[1, 1, i] + gtd2[0, 1, i] - 2.0 * gtd1[0, 0, i] * V2[i]
        ) / gap

    comps = _aligned_components(e1x, e1y, e2x, e2y)
    tables = {1: {o: comps[o][0] for o in _OFFSETS}, 2: {o: comps[o][1] for o in _OFFSETS}}
    fd = {}
    for kidx in (1, 2):
        first, second = _fd_tables(tables[kidx], h)
        for i in range(2):
            eix = e1x if i == 0 else e2x
            eiy = e1y if i == 0 else e2y
            fd[f"V{kidx}_{i + 1}"] = eix * first[0] + eiy * first[1]
            fd[f"V{kidx}_{i + 1}{i + 1}"] = (
                eix * eix * second[0, 0]
                + 2.0 * eix * eiy * second[0, 1]
                + eiy * eiy * second[1, 1]
            )

    errors, raw = {}, {}
    for key, f_vals in formula.items():
        diff = float(np.max(np.abs((f_vals - fd[key])[mask])))
        scale = float(np.max(np.abs(f_vals[mask])))
        raw[key] = diff
        errors[key] = diff / (1.0 + scale)
    return EigvecFieldReport(errors, raw, masked, tested)


# ---------------------------------------------------------------------------
# structural-term report
# ---------------------------------------------------------------------------

@dataclass
class StructuralReport:
    """Empirical constant in the structural lower bound; reporting only."""

    empirical_c: float | None
    deficit: np.ndarray
    mask: np.ndarray
    tested_nodes: int


def structural_report(u, g, chi, cfg):
    """Max observed deficit F^{11} gtilde_{11,1}^2 / lambda_1^2 - L_F(log lambda_1).

    Evaluated only where the gap clears gap_floor and lambda_1 is at least
    twice its median; the proposition's constant is existential, so this
    reports and never asserts.
    """
    _require_flat(g)
    conn = ConnectionField.flat(u.grid)
    gt, lam1, lam2 = _check_admissible(u, g, chi, conn)
    frames = _pencil_frames(g, gt)[2:]
    e1x, e1y, e2x, e2y = frames
    h = u.grid.h

    F = lam1 * lam2 / (lam1 + lam2)
    Fi1 = F * F / lam1**2
    Fi2 = F * F / lam2**2

    logl = np.log(lam1)
    sec = [
        [dxx(logl, h), dxy(logl, h)],
        [dxy(logl, h), dyy(logl, h)],
    ]

    def directional_second(ex_, ey_):
        return (
            ex_ * ex_ * sec[0][0] + 2.0 * ex_ * ey_ * sec[0][1] + ey_ * ey_ * sec[1][1]
        )

    L_F = Fi1 * directional_second(e1x, e1y) + Fi2 * directional_second(e2x, e2y)
    gtd1, _ = _frame_tensor_derivatives(gt, frames, h)
    R = Fi1 * gtd1[0, 0, 0] ** 2 / lam1**2
    deficit = R - L_F

    mask = _erode((lam1 - lam2) >= cfg.gap_floor * lam1)
    mask &= lam1 >= 2.0 * float(np.median(lam1))
    tested = int(np.count_nonzero(mask))
    emp = float(np.max(deficit[mask])) if tested else None
    return StructuralReport(emp, deficit, mask, tested)


# ---------------------------------------------------------------------------
# extremal system at the maximum of Q-tilde
# ---------------------------------------------------------------------------

@dataclass
class ExtremalReport:
    node: tuple[int, int]
    vacuous: bool
    extremal_residuals: tuple[float, float] = (float("nan"), float("nan"))
    solved: dict[str, float] = field(default_factory=dict)
    observed: dict[str, float] = field(default_factory=dict)
    bound_margins: dict[str, float] = field(default_factory=dict)


def extremal_system_residual(u, g, chi, f, node, cfg, bound_constant=10.0):
    """Diagnostics of the extremal equations at the discrete argmax of Q-tilde.

    Evaluates the first-order extremal residuals (they vanish only to O(h)
    at a grid maximum), solves the merged extremal/differentiated-equation
    system for the first derivatives of gtilde and compares with directly
    differenced values, and reports margins of the four derivative bounds
    with an empirically calibrated constant.  Vacuous unless
    lambda_1 >= 3 lambda_2 at the node.
    """
    _require_flat(g)
    conn = ConnectionField.flat(u.grid)
    gt, lam1f, lam2f = _check_admissible(u, g, chi, conn)
    _, Q, _ = test_quantities(u, g, chi, conn, cfg)
    i0, j0 = node
    qv = Q.values
    neighborhood = [
        qv[(i0 + di) % u.grid.n, (j0 + dj) % u.grid.n] for di, dj in _OFFSETS
    ]
    if qv[i0, j0] < max(neighborhood) - 1e-14:
        raise ValueError(f"node {node} is not a local maximum of the test quantity")

    lam1 = float(lam1f[i0, j0])
    lam2 = float(lam2f[i0, j0])
    if lam1 < 3.0 * lam2:
        return ExtremalReport(node=node, vacuous=True)

    frames = _pencil_frames(g, gt)[2:]
    e1x, e1y, e2x, e2y = frames
    h = u.grid.h
    gtd1, _ = _frame_tensor_derivatives(gt, frames, h)
    A = cfg.phi_slope

    ux, uy = u.gradient()
    at = lambda arr: float(arr[i0, j0])
    u1 = at(e1x * ux + e1y * uy)
    u2 = at(e2x * ux + e2y * uy)
    chi_f = {
        (a, b): at(
            (e1x if a == 0 else e2x)
            * ((e1x if b == 0 else e2x) * chi.a11 + (e1y if b == 0 else e2y) * chi.a12)
            + (e1y if a == 0 else e2y)
            * ((e1x if b == 0 else e2x) * chi.a12 + (e1y if b == 0 else e2y) * chi.a22)
        )
        for a in range(2)
        for b in range(2)
    }
    gap = lam1 - lam2
    g11_1, g11_2 = at(gtd1[0, 0, 0]), at(gtd1[0, 0, 1])
    g22_1, g22_2 = at(gtd1[1, 1, 0]), at(gtd1[1, 1, 1])
    g12_1, g12_2 = at(gtd1[0, 1, 0]), at(gtd1[0, 1, 1])
    V2_1 = g12_1 / gap
    V2_2 = g12_2 / gap

    # First-order extremal equations; O(h) residuals at a grid maximum.
    r1 = g11_1 / lam1 + A * u1 * (V2_1 * u2 + lam1 - chi_f[(0, 0)])
    r2 = g11_2 / lam1 + A * u1 * (V2_2 * u2 - chi_f[(0, 1)])

    # Merged system (flat metric, no curvature term): the extremal
    # equations determine gtilde_{11,i} given the off-diagonal derivatives
    # (entering through the eigenvector derivative V^2_i, taken as
    # observed), then the differentiated equation determines gtilde_{22,i}.
    fx, fy = dx(f.values, h), dy(f.values, h)
    fval = at(f.values)
    f1 = at(e1x * fx + e1y * fy)
    f2 = at(e2x * fx + e2y * fy)
    s11_1 = -lam1 * A * u1 * (lam1 - chi_f[(0, 0)] + V2_1 * u2)
    s11_2 = -lam1 * A * u1 * (V2_2 * u2 - chi_f[(0, 1)])
    s22_1 = f1 * lam2**2 / fval**2 - s11_1 * lam2**2 / lam1**2
    s22_2 = f2 * lam2**2 / fval**2 - s11_2 * lam2**2 / lam1**2

    solved = {"g11_1": s11_1, "g11_2": s11_2, "g22_1": s22_1, "g22_2": s22_2}
    observed = {"g11_1": g11_1, "g11_2": g11_2, "g22_1": g22_1, "g22_2": g22_2}
    C = bound_constant
    bound_margins = {
        "g11_1": C * A * lam1**2 - abs(g11_1),
        "g11_2": C * A * lam1 - abs(g11_2),
        "g22_1": C * A - abs(g22_1),
        "g22_2": C - abs(g22_2),
    }
    return ExtremalReport(
        node=node,
        vacuous=False,
        extremal_residuals=(r1, r2),
        solved=solved,
        observed=observed,
        bound_margins=bound_margins,
    )
