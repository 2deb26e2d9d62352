"""Radial grids, sampled fields and the radial differential operators.

Fields live on the half line (0, R_max]; the origin is never a node.  Every
integral is taken against the measure ``r dr``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericError, ParameterError

__all__ = [
    "RadialGrid",
    "FieldState",
    "make_grid",
    "geometric_ratio",
    "integrate",
    "d_r",
    "radial_laplacian",
    "check_class",
]

MIN_NODES = 16
MIN_RADIUS = 1e-100


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _simpson_weights(x):
    """Weights on ``x = (0, r_1, ..., r_N)`` for the integral of g over [0, r_N].

    Intervals are paired from the outer end into nonuniform Simpson panels.
    A panel whose two widths differ by a factor of two or more would carry a
    non-positive weight; such intervals fall back to the trapezoid rule, as
    does a leftover innermost interval.
    """
    h = np.diff(x)
    W = np.zeros_like(x)
    j = len(h)
    while j >= 2:
        h0, h1 = h[j - 2], h[j - 1]
        if h1 < 2.0 * h0 and h0 < 2.0 * h1:
            s = h0 + h1
            W[j - 2] += s / 6.0 * (2.0 - h1 / h0)
            W[j - 1] += s**3 / (6.0 * h0 * h1)
            W[j] += s / 6.0 * (2.0 - h0 / h1)
            j -= 2
        else:
            W[j - 1] += 0.5 * h[j - 1]
            W[j] += 0.5 * h[j - 1]
            j -= 1
    if j == 1:
        W[0] += 0.5 * h[0]
        W[1] += 0.5 * h[0]
    return W


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes ``r_1 < ... < r_N = R_max`` with quadrature data for ``r dr``.

    Derived arrays (all read-only):

    ``weights``
        high-order quadrature weights used by :func:`integrate`.
    ``trapezoid_weights``
        composite trapezoid weights for ``f(r) r`` with ``f(0) r = 0``.
    ``h``
        interval widths ``r_j - r_{j-1}`` with ``r_0 = 0``.
    ``faces``
        interval midpoints; the innermost one is ``r_1 / 2``.
    ``volumes``
        finite-volume cell measures ``(face_{i+1/2}^2 - face_{i-1/2}^2) / 2``,
        the last cell ending at ``R_max``.  These are the mass weights of the
        discrete energy.
    """

    r: np.ndarray
    k: int = 1
    grading: str = "uniform"
    ratio: float | None = None
    weights: np.ndarray = field(init=False, repr=False)
    trapezoid_weights: np.ndarray = field(init=False, repr=False)
    h: np.ndarray = field(init=False, repr=False)
    faces: np.ndarray = field(init=False, repr=False)
    volumes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < 2:
            raise ParameterError("grid needs at least two nodes")
        if not np.all(np.isfinite(r)) or r[0] <= 0.0 or np.any(np.diff(r) <= 0.0):
            raise ParameterError("nodes must be positive and strictly increasing")
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"equivariance degree must be a positive integer, got {self.k}")
        set_ = object.__setattr__
        set_(self, "k", int(self.k))
        set_(self, "r", _frozen(r))
        x = np.concatenate([[0.0], r])
        h = np.diff(x)
        set_(self, "h", _frozen(h))
        set_(self, "weights", _frozen(_simpson_weights(x)[1:] * r))
        trap = np.zeros_like(x)
        trap[:-1] += 0.5 * h
        trap[1:] += 0.5 * h
        set_(self, "trapezoid_weights", _frozen(trap[1:] * r))
        faces = 0.5 * (x[:-1] + x[1:])
        set_(self, "faces", _frozen(faces))
        outer = np.append(faces[1:], r[-1])
        set_(self, "volumes", _frozen(0.5 * (outer**2 - faces**2)))

    @property
    def N(self) -> int:
        return self.r.size

    @property
    def R_max(self) -> float:
        return float(self.r[-1])

    @property
    def h_min(self) -> float:
        return float(self.h.min())

    def scaled(self, factor: float) -> RadialGrid:
        """The same grid with every radius multiplied by ``factor``."""
        return RadialGrid(self.r * factor, k=self.k, grading=self.grading, ratio=self.ratio)

    def spacing_at(self, radius: float) -> float:
        """Local node spacing near ``radius``."""
        i = int(np.clip(np.searchsorted(self.r, radius), 0, self.N - 1))
        return float(self.h[i])

    def describe(self) -> str:
        if self.grading == "geometric":
            return f"geometric:{self.ratio!r}"
        return self.grading


def geometric_ratio(r_min: float, R_max: float, N: int) -> float:
    """Ratio for which a geometric grid of ``N`` nodes starts at ``r_min``."""
    if not 0.0 < r_min < R_max:
        raise ParameterError("need 0 < r_min < R_max")
    return float((r_min / R_max) ** (1.0 / (N - 1)))


def make_grid(R_max: float, N: int, grading: str = "uniform", ratio: float | None = None,
              k: int = 1) -> RadialGrid:
    """Build a uniform or geometrically graded grid on (0, R_max].

    Uniform nodes are ``r_i = i R_max / N``.  Geometric nodes are
    ``r_i = R_max * ratio**(N - i)``, so consecutive radii have the constant
    ratio ``r_i / r_{i+1} = ratio``.
    """
    if not np.isfinite(R_max) or R_max <= 0:
        raise ParameterError(f"R_max must be positive, got {R_max}")
    if int(N) != N or N < MIN_NODES:
        raise ParameterError(f"N must be an integer >= {MIN_NODES}, got {N}")
    N = int(N)
    if grading == "uniform":
        r = np.arange(1, N + 1, dtype=float) * (R_max / N)
        r[-1] = R_max
        return RadialGrid(r, k=k)
    if grading == "geometric":
        if ratio is None or not 0.0 < ratio < 1.0:
            raise ParameterError(f"geometric ratio must lie in (0, 1), got {ratio}")
        r = R_max * float(ratio) ** np.arange(N - 1, -1, -1, dtype=float)
        if r[0] < MIN_RADIUS:
            raise ParameterError(f"geometric grid underflows: r_1 = {r[0]:.3g}")
        return RadialGrid(r, k=k, grading="geometric", ratio=float(ratio))
    raise ParameterError(f"unknown grading {grading!r}")


def _check_finite(f, what="sample"):
    bad = np.flatnonzero(~np.isfinite(f))
    if bad.size:
        i = int(bad[0])
        raise NumericError(f"non-finite {what} at node {i}", index=i)


def integrate(grid: RadialGrid, f) -> float:
    """Quadrature of ``f(r) r dr`` over (0, R_max]."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.r.shape:
        raise ParameterError(f"expected {grid.N} samples, got {f.shape}")
    _check_finite(f)
    return float(grid.weights @ f)


def _ghost(grid, f, ell):
    # parity extension of f - ell*pi to r = -r_1
    c = ell * np.pi
    return c + (-1.0) ** grid.k * (f[0] - c)


def _fd_weights(x0, xs, order):
    """Fornberg finite-difference weights at ``x0`` for derivative ``order``."""
    n = len(xs)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for s in range(mn, 0, -1):
                    c[i, s] = c1 * (s * c[i - 1, s - 1] - c5 * c[i - 1, s]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for s in range(mn, 0, -1):
                c[j, s] = (c4 * c[j, s] - s * c[j, s - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def _stencil(grid, f, ell):
    if grid.N < 3:
        raise ParameterError("derivative stencils need at least 3 nodes")
    f = np.asarray(f, dtype=float)
    xm = np.concatenate([[-grid.r[0]], grid.r[:-2]])
    fm = np.concatenate([[_ghost(grid, f, ell)], f[:-2]])
    x, fc = grid.r[:-1], f[:-1]
    xp, fp = grid.r[1:], f[1:]
    h0, h1 = x - xm, xp - x
    return f, fm, fc, fp, h0, h1


def d_r(grid: RadialGrid, f, ell: int = 0) -> np.ndarray:
    """First radial derivative, second order.

    Interior nodes use the centered three-point formula on the nonuniform
    grid.  At ``r_1`` the left neighbour is a ghost at ``-r_1`` carrying the
    parity extension of ``f - ell*pi`` (odd for odd k, even for even k).  The
    outer node uses a one-sided three-point formula.
    """
    f, fm, fc, fp, h0, h1 = _stencil(grid, f, ell)
    out = np.empty_like(f)
    out[:-1] = (-h1 / (h0 * (h0 + h1)) * fm + (h1 - h0) / (h0 * h1) * fc
                + h0 / (h1 * (h0 + h1)) * fp)
    out[-1] = _fd_weights(grid.r[-1], grid.r[-3:], 1) @ f[-3:]
    return out


def radial_laplacian(grid: RadialGrid, f, ell: int = 0) -> np.ndarray:
    """``f'' + f'/r`` with the stencils of :func:`d_r`.

    The outer node uses a four-point one-sided second derivative.
    """
    f, fm, fc, fp, h0, h1 = _stencil(grid, f, ell)
    d2 = np.empty_like(f)
    d2[:-1] = 2.0 * (fm / (h0 * (h0 + h1)) - fc / (h0 * h1) + fp / (h1 * (h0 + h1)))
    d2[-1] = _fd_weights(grid.r[-1], grid.r[-4:], 2) @ f[-4:]
    return d2 + d_r(grid, f, ell) / grid.r


@dataclass(frozen=True, eq=False)
class FieldState:
    """A pair ``(psi, psidot)`` sampled on a grid, tagged with its class.

    ``ell`` and ``m`` identify the topological class: ``psi -> ell*pi`` at the
    origin and ``psi -> m*pi`` at infinity.  The class is a label; use
    :func:`check_class` to test it against the samples.
    """

    grid: RadialGrid
    psi: np.ndarray
    psidot: np.ndarray = None
    ell: int = 0
    m: int = 0
    time: float = 0.0

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float)
        psidot = np.zeros_like(psi) if self.psidot is None else np.array(self.psidot, dtype=float)
        if psi.shape != self.grid.r.shape or psidot.shape != self.grid.r.shape:
            raise ParameterError(
                f"field length mismatch: grid has {self.grid.N} nodes, "
                f"got psi {psi.shape} and psidot {psidot.shape}")
        psi.flags.writeable = False
        psidot.flags.writeable = False
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "psidot", psidot)
        object.__setattr__(self, "ell", int(self.ell))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "time", float(self.time))

    @property
    def k(self) -> int:
        return self.grid.k

    def replace(self, **changes) -> FieldState:
        return dataclasses.replace(self, **changes)

    def __neg__(self) -> FieldState:
        return self.replace(psi=-self.psi, psidot=-self.psidot, ell=-self.ell, m=-self.m)


def check_class(state: FieldState, tol: float = 0.2) -> list[str]:
    """Compare the field's end values with its class label.

    The origin value is linearly extrapolated from the two innermost nodes.
    Returns a list of human-readable problems, empty when the state is
    consistent.
    """
    r, psi = state.grid.r, state.psi
    problems = []
    at_origin = psi[0] - r[0] * (psi[1] - psi[0]) / (r[1] - r[0])
    if abs(at_origin - state.ell * np.pi) > tol:
        problems.append(f"psi(0) ~ {at_origin:.6g}, expected ell*pi = {state.ell * np.pi:.6g}")
    if abs(psi[-1] - state.m * np.pi) > tol:
        problems.append(f"psi(R_max) = {psi[-1]:.6g}, expected m*pi = {state.m * np.pi:.6g}")
    bad = np.flatnonzero(~(np.isfinite(psi) & np.isfinite(state.psidot)))
    if bad.size:
        problems.append(f"non-finite values from node {int(bad[0])}")
    return problems
