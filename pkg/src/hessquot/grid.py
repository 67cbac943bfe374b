"""Periodic 2-D grid, fields, and discrete differential geometry.

All fields live on a uniform N x N grid covering the torus [0, L)^2; node
(i, j) sits at (i h, j h) with h = L / N and indices wrapping modulo N.
Stencils are second-order centered differences throughout, with the 4-point
cross for the mixed derivative, so everything periodic is O(h^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import GeometryError, GridMismatchError
from .kernel import pencil_eigenvalues

# The 8-neighbor graph metric overestimates geodesic distances by at most
# this factor; divide the reported diameter by it for a lower estimate.
GRAPH_DISTORTION_BOUND = 1.09


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the square torus [0, L)^2."""

    n: int
    length: float = 2.0 * math.pi

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"n_per_axis must be even and >= 8, got {self.n}")
        if not (self.length > 0.0):
            raise ValueError(f"period length must be positive, got {self.length}")

    @property
    def h(self):
        return self.length / self.n

    def coords(self):
        """Meshgrid (x, y) of node coordinates, indexed [i, j]."""
        ax = np.arange(self.n) * self.h
        return np.meshgrid(ax, ax, indexing="ij")


def _check_same_grid(*fields):
    g0 = fields[0].grid
    for f in fields[1:]:
        if f.grid != g0:
            raise GridMismatchError("fields live on different grids")
    return g0


# ---------------------------------------------------------------------------
# periodic centered-difference stencils on raw (n, n) arrays
# ---------------------------------------------------------------------------

def dx(a, h):
    return (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * h)


def dy(a, h):
    return (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2.0 * h)


def dxx(a, h):
    return (np.roll(a, -1, axis=0) - 2.0 * a + np.roll(a, 1, axis=0)) / (h * h)


def dyy(a, h):
    return (np.roll(a, -1, axis=1) - 2.0 * a + np.roll(a, 1, axis=1)) / (h * h)


def dxy(a, h):
    app = np.roll(np.roll(a, -1, axis=0), -1, axis=1)
    apm = np.roll(np.roll(a, -1, axis=0), 1, axis=1)
    amp = np.roll(np.roll(a, 1, axis=0), -1, axis=1)
    amm = np.roll(np.roll(a, 1, axis=0), 1, axis=1)
    return (app - apm - amp + amm) / (4.0 * h * h)


@dataclass(frozen=True)
class ScalarField:
    """Periodic grid samples of a scalar function."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"values must be {self.grid.n}x{self.grid.n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field contains non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn):
        x, y = grid.coords()
        return cls(grid, fn(x, y))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full((grid.n, grid.n), float(c)))

    def gradient(self):
        h = self.grid.h
        return dx(self.values, h), dy(self.values, h)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self, other)
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self, other)
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * c)


@dataclass(frozen=True)
class Sym2Field:
    """Symmetric (2,0) tensor field; only the three independent entries are stored."""

    grid: Grid
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray

    def __post_init__(self):
        for name in ("a11", "a12", "a22"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (self.grid.n, self.grid.n):
                raise ValueError(f"{name} must be {self.grid.n}x{self.grid.n}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, v)

    @classmethod
    def identity(cls, grid, scale=1.0):
        n = grid.n
        s = np.full((n, n), float(scale))
        return cls(grid, s, np.zeros((n, n)), s.copy())

    @classmethod
    def conformal(cls, grid, psi):
        """Metric e^{2 psi} delta for a scalar conformal factor field."""
        f = np.exp(2.0 * np.asarray(psi, dtype=float))
        return cls(grid, f, np.zeros_like(f), f.copy())

    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a12

    def is_spd(self):
        return bool(np.all(self.a11 > 0.0) and np.all(self.det() > 0.0))

    def require_spd(self, name="metric"):
        if not self.is_spd():
            bad = np.argwhere((self.a11 <= 0.0) | (self.det() <= 0.0))
            i, j = (int(bad[0][0]), int(bad[0][1])) if len(bad) else (-1, -1)
            raise GeometryError(f"{name} is not positive definite at node ({i}, {j})")

    def inverse(self):
        d = self.det()
        return Sym2Field(self.grid, self.a22 / d, -self.a12 / d, self.a11 / d)

    def __add__(self, other):
        _check_same_grid(self, other)
        return Sym2Field(
            self.grid, self.a11 + other.a11, self.a12 + other.a12, self.a22 + other.a22
        )


@dataclass(frozen=True)
class ConnectionField:
    """Christoffel symbols and curvature of a metric on the grid.

    gamma has shape (2, 2, 2, n, n) indexed [k, i, j] for Gamma^k_{ij};
    gauss is the Gauss curvature K and r1212 the single independent
    curvature component R_{1212} = K det(g).
    """

    grid: Grid
    gamma: np.ndarray
    gauss: np.ndarray
    r1212: np.ndarray

    @classmethod
    def flat(cls, grid):
        n = grid.n
        z = np.zeros((n, n))
        return cls(grid, np.zeros((2, 2, 2, n, n)), z, z.copy())


def connection_from_metric(g):
    """Levi-Civita Christoffel symbols and curvature by centered differences."""
    g.require_spd("metric")
    grid, h = g.grid, g.grid.h
    n = grid.n
    comp = np.empty((2, 2, n, n))
    comp[0, 0] = g.a11
    comp[0, 1] = comp[1, 0] = g.a12
    comp[1, 1] = g.a22
    ginv = g.inverse()
    inv = np.empty((2, 2, n, n))
    inv[0, 0] = ginv.a11
    inv[0, 1] = inv[1, 0] = ginv.a12
    inv[1, 1] = ginv.a22

    # partial_c g_{ab}
    dg = np.empty((2, 2, 2, n, n))
    for a in range(2):
        for b in range(2):
            dg[0, a, b] = dx(comp[a, b], h)
            dg[1, a, b] = dy(comp[a, b], h)

    gamma = np.zeros((2, 2, 2, n, n))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                acc = np.zeros((n, n))
                for l in range(2):
                    acc += inv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
                gamma[k, i, j] = 0.5 * acc

    # R^m_{jkl} = d_k Gamma^m_{lj} - d_l Gamma^m_{kj}
    #            + Gamma^m_{ka} Gamma^a_{lj} - Gamma^m_{la} Gamma^a_{kj}
    def riemann_up(m, j, k, l):
        dk = dx if k == 0 else dy
        dl = dx if l == 0 else dy
        val = dk(gamma[m, l, j], h) - dl(gamma[m, k, j], h)
        for a in range(2):
            val += gamma[m, k, a] * gamma[a, l, j] - gamma[m, l, a] * gamma[a, k, j]
        return val

    # R_{1212} = g_{1m} R^m_{2 1 2}
    r1212 = comp[0, 0] * riemann_up(0, 1, 0, 1) + comp[0, 1] * riemann_up(1, 1, 0, 1)
    gauss = r1212 / g.det()
    return ConnectionField(grid, gamma, gauss, r1212)


def covariant_hessian(u, g, conn):
    """Covariant Hessian (nabla^2 u)_{ij} = d_i d_j u - Gamma^k_{ij} d_k u."""
    _check_same_grid(u, g, conn)
    g.require_spd("metric")
    h = u.grid.h
    v = u.values
    ux, uy = dx(v, h), dy(v, h)
    h11 = dxx(v, h) - conn.gamma[0, 0, 0] * ux - conn.gamma[1, 0, 0] * uy
    h12 = dxy(v, h) - conn.gamma[0, 0, 1] * ux - conn.gamma[1, 0, 1] * uy
    h22 = dyy(v, h) - conn.gamma[0, 1, 1] * ux - conn.gamma[1, 1, 1] * uy
    return Sym2Field(u.grid, h11, h12, h22)


def integrate(w, g):
    """h^2 sum over nodes of w sqrt(det g), in fixed row-major order."""
    _check_same_grid(w, g)
    h = w.grid.h
    return float(np.sum((w.values * np.sqrt(g.det())).ravel(order="C"))) * h * h


@dataclass(frozen=True)
class GeometryConstants:
    """Constants of the background data entering the a priori estimates."""

    c_upper: float
    c_lower: float
    diameter: float


def _grid_diameter(g, n_sources=16):
    """Upper-biased g-diameter via Dijkstra on the 8-neighbor periodic graph.

    Edge lengths use the metric averaged over the edge endpoints; graph
    distances overestimate geodesics (by at most GRAPH_DISTORTION_BOUND for
    slowly varying metrics), so the reported maximum is safe in upper-bound
    checks.  Sources are a deterministic coarse sublattice.
    """
    n = g.grid.n
    h = g.grid.h
    idx = np.arange(n * n).reshape(n, n)
    rows, cols, vals = [], [], []
    offsets = [(1, 0), (0, 1), (1, 1), (1, -1)]
    for di, dj in offsets:
        nbr = np.roll(np.roll(idx, -di, axis=0), -dj, axis=1)
        g11 = 0.5 * (g.a11 + np.roll(np.roll(g.a11, -di, axis=0), -dj, axis=1))
        g12 = 0.5 * (g.a12 + np.roll(np.roll(g.a12, -di, axis=0), -dj, axis=1))
        g22 = 0.5 * (g.a22 + np.roll(np.roll(g.a22, -di, axis=0), -dj, axis=1))
        ex, ey = di * h, dj * h
        length = np.sqrt(g11 * ex * ex + 2.0 * g12 * ex * ey + g22 * ey * ey)
        rows.append(idx.ravel())
        cols.append(nbr.ravel())
        vals.append(length.ravel())
    graph = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * n, n * n),
    ).tocsr()
    step = n // 4
    sources = [i * step * n + j * step for i in range(4) for j in range(4)]
    dist = dijkstra(graph, directed=False, indices=sources)
    return float(np.max(dist))


def geometry_constants(chi, g):
    """C(chi, g), c(chi, g) and the torus diameter for the background data."""
    _check_same_grid(chi, g)
    g.require_spd("metric")
    lam1, lam2 = pencil_eigenvalues(g.a11, g.a12, g.a22, chi.a11, chi.a12, chi.a22)
    c_upper = max(float(np.max(lam1)), 0.0)
    if c_upper == 0.0:
        c_upper = 1e-12  # keep the constant positive when chi <= 0
    c_lower = max(-float(np.min(lam2)), 0.0)
    return GeometryConstants(c_upper=c_upper, c_lower=c_lower, diameter=_grid_diameter(g))


# ---------------------------------------------------------------------------
# plain-text field format: header "N L" then N^2 reals row-major
# ---------------------------------------------------------------------------

def write_field(path, f):
    with open(path, "w") as fh:
        fh.write(f"{f.grid.n} {f.grid.length!r}\n")
        for v in f.values.ravel(order="C"):
            fh.write(f"{v!r}\n")


def read_field(path):
    with open(path) as fh:
        header = fh.readline().split()
        n, length = int(header[0]), float(header[1])
        vals = np.loadtxt(fh)
    grid = Grid(n, length)
    return ScalarField(grid, vals.reshape(n, n))
