"""Eigenvalue-space algebra of the positive Hessian quotient operator.

Everything here is a pure function of eigenvalue vectors or pointwise 2x2
symmetric pencils.  The operator of interest is sigma_n / sigma_{n-1}, for
which all first and second derivatives have closed forms; the general
sigma_n / sigma_k quotient is handled with analytic first derivatives and a
central-difference second-derivative evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, GridMismatchError

# Relative steps for the central-difference second derivatives of the
# general sigma_n/sigma_k quotient.
_FD_STEP_SECOND = 1e-5
# Below this relative eigenvalue gap, divided differences switch to their
# analytic limit to avoid 0/0.
_DEGENERATE_GAP = 1e-8


def _check_positive(lam):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise ValueError("eigenvalue vector must be 1-D and nonempty")
    if np.any(lam <= 0.0):
        raise AdmissibilityError(f"eigenvalues must be positive, got {lam}")
    return lam


def elementary_symmetric(lam, k):
    """sigma_k of the entries of lam, with sigma_0 = 1."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if k == 0:
        return 1.0
    if k < 0 or k > n:
        raise ValueError(f"order k={k} out of range for n={n}")
    # coefficients of prod (x - lam_i): x^n - e1 x^(n-1) + e2 x^(n-2) - ...
    coeffs = np.poly(lam)
    return float((-1.0) ** k * coeffs[k])


def sigma_quotient(lam, k, l):
    """sigma_k(lam) / sigma_l(lam) for positive lam and 0 <= l < k <= n."""
    lam = _check_positive(lam)
    n = lam.size
    if not (0 <= l < k <= n):
        raise ValueError(f"need 0 <= l < k <= n, got k={k}, l={l}, n={n}")
    return elementary_symmetric(lam, k) / elementary_symmetric(lam, l)


def quotient_value(lam):
    """F(lam) = sigma_n/sigma_{n-1}(lam) = 1 / sigma_1(1/lam)."""
    lam = _check_positive(lam)
    return 1.0 / float(np.sum(1.0 / lam))


@dataclass(frozen=True)
class EigenPair2D:
    """Ordered eigenpair of a 2x2 symmetric pencil (gtilde, g)."""

    lambda1: float
    lambda2: float
    e1: np.ndarray
    e2: np.ndarray

    @property
    def gap(self):
        return self.lambda1 - self.lambda2


def _fix_sign(v):
    """Deterministic sign: first component of largest magnitude nonzero... spec
    convention is first nonzero component positive."""
    if v[0] != 0.0:
        return v if v[0] > 0 else -v
    return v if v[1] > 0 else -v


def eigen_decompose(g, gtilde):
    """Closed-form eigendecomposition of the pencil det(gtilde - lam g) = 0.

    g must be SPD; returns g-orthonormal eigenvectors with lambda1 >= lambda2.
    """
    g = np.asarray(g, dtype=float)
    gt = np.asarray(gtilde, dtype=float)
    detg = g[0, 0] * g[1, 1] - g[0, 1] ** 2
    if g[0, 0] <= 0.0 or detg <= 0.0:
        raise AdmissibilityError("metric g is not positive definite")
    lam1, lam2 = pencil_eigenvalues(
        g[0, 0], g[0, 1], g[1, 1], gt[0, 0], gt[0, 1], gt[1, 1]
    )
    v1x, v1y, v2x, v2y = pencil_eigenvectors(
        g[0, 0], g[0, 1], g[1, 1], gt[0, 0], gt[0, 1], gt[1, 1], lam1, lam2
    )
    e1 = _fix_sign(np.array([float(v1x), float(v1y)]))
    e2 = _fix_sign(np.array([float(v2x), float(v2y)]))
    return EigenPair2D(float(lam1), float(lam2), e1, e2)


def pencil_eigenvalues(g11, g12, g22, t11, t12, t22):
    """Vectorized eigenvalues of the pencil (gtilde, g), ordered lam1 >= lam2.

    All arguments broadcast; returns (lam1, lam2).
    """
    a = g11 * g22 - g12 * g12
    b = g11 * t22 + g22 * t11 - 2.0 * g12 * t12
    c = t11 * t22 - t12 * t12
    disc = np.maximum(b * b - 4.0 * a * c, 0.0)
    root = np.sqrt(disc)
    lam1 = (b + root) / (2.0 * a)
    lam2 = (b - root) / (2.0 * a)
    return lam1, lam2


def pencil_eigenvectors(g11, g12, g22, t11, t12, t22, lam1, lam2):
    """Vectorized g-orthonormal eigenvectors for the ordered pencil eigenvalues.

    Returns components (e1x, e1y, e2x, e2y).  e2 is built g-orthogonal to e1
    so the frame stays well conditioned through eigenvalue crossings.
    """
    # Rows of (gtilde - lam1 g) annihilate e1; take the better-scaled row.
    r1x = t11 - lam1 * g11
    r1y = t12 - lam1 * g12
    r2x = t12 - lam1 * g12
    r2y = t22 - lam1 * g22
    n1 = r1x * r1x + r1y * r1y
    n2 = r2x * r2x + r2y * r2y
    use1 = n1 >= n2
    vx = np.where(use1, r1y, r2y)
    vy = np.where(use1, -r1x, -r2x)
    # Degenerate pencil: any vector is an eigenvector.
    deg = (n1 + n2) == 0.0
    vx = np.where(deg, 1.0, vx)
    vy = np.where(deg, 0.0, vy)
    norm1 = np.sqrt(g11 * vx * vx + 2.0 * g12 * vx * vy + g22 * vy * vy)
    e1x, e1y = vx / norm1, vy / norm1
    # e2 is Euclidean-perpendicular to g e1, hence g-orthogonal to e1.
    wx = g11 * e1x + g12 * e1y
    wy = g12 * e1x + g22 * e1y
    ux, uy = -wy, wx
    norm2 = np.sqrt(g11 * ux * ux + 2.0 * g12 * ux * uy + g22 * uy * uy)
    e2x, e2y = ux / norm2, uy / norm2
    # Deterministic sign: first nonzero component positive.
    s1 = np.where(e1x != 0.0, np.sign(e1x), np.sign(e1y))
    s2 = np.where(e2x != 0.0, np.sign(e2x), np.sign(e2y))
    return e1x * s1, e1y * s1, e2x * s2, e2y * s2


@dataclass(frozen=True)
class KernelDerivatives:
    """F = sigma_n/sigma_{n-1} and its derivatives at a positive eigenvalue vector."""

    F: float
    Fi: np.ndarray
    lam: np.ndarray
    kappa: np.ndarray

    def second(self, i, j):
        """Closed-form F^{ii,jj} = 2F^3/(lam_i^2 lam_j^2) - 2 delta_ij F^2/lam_i^3."""
        val = 2.0 * self.F**3 / (self.lam[i] ** 2 * self.lam[j] ** 2)
        if i == j:
            val -= 2.0 * self.F**2 / self.lam[i] ** 3
        return val


def derivatives(lam):
    """Value and first derivatives of sigma_n/sigma_{n-1} at lam > 0."""
    lam = _check_positive(lam)
    kappa = 1.0 / lam
    F = 1.0 / float(np.sum(kappa))
    Fi = F * F * kappa * kappa
    return KernelDerivatives(F=F, Fi=Fi, lam=lam, kappa=kappa)


def concavity_identity(lam, xi):
    """Both sides of the diagonal concavity identity for sigma_n/sigma_{n-1}.

    lhs = -sum_ij F^{ii,jj} xi_i xi_j
    rhs = 2 sum_i F^{ii} xi_i^2 / lam_i - 2 (sum_i F^{ii} xi_i)^2 / F

    The two agree exactly; both are returned so callers can assert it.
    """
    lam = _check_positive(lam)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != lam.shape:
        raise ValueError("xi must have the same length as lam")
    der = derivatives(lam)
    F, Fi = der.F, der.Fi
    n = lam.size
    lhs = 0.0
    for i in range(n):
        for j in range(n):
            lhs -= der.second(i, j) * xi[i] * xi[j]
    s = float(np.dot(Fi, xi))
    rhs = 2.0 * float(np.dot(Fi, xi * xi / lam)) - 2.0 * s * s / F
    return lhs, rhs


def quotient_k(lam, k):
    """sigma_n/sigma_k(lam) for 1 <= k <= n-1."""
    lam = _check_positive(lam)
    n = lam.size
    if not (1 <= k <= n - 1):
        raise ValueError(f"need 1 <= k <= n-1, got k={k}, n={n}")
    return elementary_symmetric(lam, n) / elementary_symmetric(lam, k)


def quotient_k_first(lam, k):
    """Analytic first derivatives of sigma_n/sigma_k via the quotient rule."""
    lam = _check_positive(lam)
    n = lam.size
    sn = elementary_symmetric(lam, n)
    sk = elementary_symmetric(lam, k)
    Fi = np.empty(n)
    for i in range(n):
        rest = np.delete(lam, i)
        dn = elementary_symmetric(rest, n - 1)
        dk = elementary_symmetric(rest, k - 1)
        Fi[i] = (dn * sk - sn * dk) / (sk * sk)
    return Fi


def _quotient_k_second_fd(lam, k):
    """Central-difference F^{ii,jj} matrix for sigma_n/sigma_k (relative step)."""
    n = lam.size
    out = np.empty((n, n))
    F0 = quotient_k(lam, k)
    h = _FD_STEP_SECOND * lam
    for i in range(n):
        lp = lam.copy()
        lm = lam.copy()
        lp[i] += h[i]
        lm[i] -= h[i]
        out[i, i] = (quotient_k(lp, k) - 2.0 * F0 + quotient_k(lm, k)) / h[i] ** 2
        for j in range(i + 1, n):
            lpp = lp.copy()
            lpm = lp.copy()
            lmp = lm.copy()
            lmm = lm.copy()
            lpp[j] += h[j]
            lpm[j] -= h[j]
            lmp[j] += h[j]
            lmm[j] -= h[j]
            val = (
                quotient_k(lpp, k)
                - quotient_k(lpm, k)
                - quotient_k(lmp, k)
                + quotient_k(lmm, k)
            ) / (4.0 * h[i] * h[j])
            out[i, j] = val
            out[j, i] = val
    return out


def _divided_difference_matrix(lam, k, Fi, D2):
    """(F^{ii} - F^{jj}) / (lam_i - lam_j) for i != j, with degenerate limits.

    For k = n-1 the closed rational form -F^2 (lam_i + lam_j)/(lam_i^2 lam_j^2)
    is used, which has no 0/0.  Otherwise a divided difference of the analytic
    first derivatives is taken, switching to the analytic limit
    F^{ii,ii} - F^{ii,jj} when the eigenvalues nearly coincide.
    """
    n = lam.size
    M = np.zeros((n, n))
    if k == n - 1:
        F = quotient_value(lam)
        for i in range(n):
            for j in range(n):
                if i != j:
                    M[i, j] = -F * F * (lam[i] + lam[j]) / (lam[i] ** 2 * lam[j] ** 2)
        return M
    floor = _DEGENERATE_GAP * lam[0]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dlam = lam[i] - lam[j]
            if abs(dlam) < floor:
                M[i, j] = D2[i, i] - D2[i, j]
            else:
                M[i, j] = (Fi[i] - Fi[j]) / dlam
    return M


def k_concavity_gap(lam, xi, k, eps0=0.0, delta0=0.0):
    """Slack in the strong concavity lower bound for sigma_n/sigma_k.

    Returns (-F^{ab,cd} xi_ab xi_cd) minus the displayed lower bound with
    constants (eps0, delta0); nonnegative at eps0 = delta0 = 0 by the
    proposition this verifies empirically.  xi is a symmetric n x n matrix
    expressed in the eigenframe, lam is decreasingly ordered and positive.
    """
    lam = _check_positive(lam)
    n = lam.size
    if np.any(np.diff(lam) > 0.0):
        raise ValueError("lam must be decreasingly ordered")
    if not (1 <= k <= n - 1):
        raise ValueError(f"need 1 <= k <= n-1, got k={k}, n={n}")
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (n, n):
        raise ValueError(f"xi must be {n}x{n}")
    if not np.allclose(xi, xi.T):
        raise ValueError("xi must be symmetric")

    F = quotient_k(lam, k)
    Fi = quotient_k_first(lam, k)
    if k == n - 1:
        der = derivatives(lam)
        D2 = np.array([[der.second(i, j) for j in range(n)] for i in range(n)])
    else:
        D2 = _quotient_k_second_fd(lam, k)
    M = _divided_difference_matrix(lam, k, Fi, D2)

    d = np.diag(xi)
    lhs = -float(d @ D2 @ d)
    for i in range(n):
        for j in range(n):
            if i != j:
                lhs -= M[i, j] * xi[i, j] ** 2

    rhs = (1.0 + eps0) * Fi[0] * xi[0, 0] ** 2 / lam[0]
    rhs += 0.5 * float(np.sum(Fi[1:] * d[1:] ** 2 / lam[1:]))
    rhs += (1.0 + delta0) * float(np.sum(Fi[1:] * xi[1:, 0] ** 2)) / lam[0]
    for i in range(1, n):
        for j in range(1, n):
            if i != j:
                rhs += Fi[i] * xi[i, j] ** 2 / lam[j]
    rhs -= float(np.dot(Fi, d)) ** 2 / F
    return lhs - rhs


def admissibility_margin(g, gtilde):
    """Minimum over nodes of the smaller pencil eigenvalue; positive iff admissible."""
    if g.grid != gtilde.grid:
        raise GridMismatchError("g and gtilde live on different grids")
    _, lam2 = pencil_eigenvalues(g.a11, g.a12, g.a22, gtilde.a11, gtilde.a12, gtilde.a22)
    return float(np.min(lam2))
