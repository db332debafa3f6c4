"""Coefficients, flux/reaction algebra, grids and fields.

The model is

    du/dt = Lap[(a - b u) u] + (c - d u) u

on a bounded domain. Everything numerical in the package works on the
structured grids defined here. Interval and rectangle grids are
vertex-centred (nodes on the boundary, trapezoid quadrature weights);
radial grids are cell-centred with r_i = (i + 1/2) h so that the
(n - 1)/r term is never evaluated at the origin.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class Params:
    """The four model coefficients plus the spatial dimension."""

    a: float
    b: float
    c: float = 0.0
    d: float = 0.0
    n: int = 1

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"need a > 0 and b > 0, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension n must be a positive integer, got {self.n}")
        for name in ("a", "b", "c", "d"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def u_crit(self) -> float:
        """Parabolicity threshold a/(2b); a - 2bu > 0 iff u < u_crit."""
        return self.a / (2.0 * self.b)

    @property
    def logistic_cap(self) -> float:
        """c/d, or a signed infinity / nan when d == 0."""
        if self.d != 0:
            return self.c / self.d
        if self.c > 0:
            return math.inf
        if self.c < 0:
            return -math.inf
        return math.nan


class BoundaryKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


def flux_phi(u, p: Params):
    """phi(u) = (a - b u) u, the quantity under the Laplacian."""
    return (p.a - p.b * u) * u


def flux_phi_prime(u, p: Params):
    """Effective diffusivity a - 2 b u."""
    return p.a - 2.0 * p.b * u


def reaction_g(u, p: Params):
    return (p.c - p.d * u) * u


def reaction_g_prime(u, p: Params):
    return p.c - 2.0 * p.d * u


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _trapezoid_weights(cells: int, h: float) -> NDArray[np.float64]:
    w = np.full(cells + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class Grid:
    """Uniform structured grid.

    Use the ``interval``, ``rectangle`` and ``radial`` constructors rather
    than the raw initializer.
    """

    geometry: str
    lengths: tuple[float, ...]
    cells: tuple[int, ...]
    origin: tuple[float, ...]
    radial_dim: int = 1

    def __post_init__(self):
        if self.geometry not in ("interval", "rectangle", "radial"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if any(c < 1 for c in self.cells) or any(L <= 0 for L in self.lengths):
            raise ValueError("cells and lengths must be positive")
        hs = [L / c for L, c in zip(self.lengths, self.cells)]
        if not np.allclose(hs, hs[0], rtol=1e-12, atol=0.0):
            raise ValueError(f"grid spacing must be uniform across axes, got {hs}")

    @classmethod
    def interval(cls, L: float = 1.0, cells: int = 100, origin: float = 0.0) -> Grid:
        return cls("interval", (float(L),), (int(cells),), (float(origin),))

    @classmethod
    def rectangle(cls, Lx: float, Ly: float, nx: int, ny: int,
                  origin: tuple[float, float] = (0.0, 0.0)) -> Grid:
        return cls("rectangle", (float(Lx), float(Ly)), (int(nx), int(ny)),
                   (float(origin[0]), float(origin[1])))

    @classmethod
    def radial(cls, R: float, cells: int, n: int) -> Grid:
        return cls("radial", (float(R),), (int(cells),), (0.0,), radial_dim=int(n))

    @property
    def h(self) -> float:
        return self.lengths[0] / self.cells[0]

    @property
    def is_radial(self) -> bool:
        return self.geometry == "radial"

    @property
    def axes(self) -> int:
        """Number of array axes of a field on this grid."""
        return len(self.cells)

    @property
    def space_dim(self) -> int:
        """Dimension of the physical domain."""
        return self.radial_dim if self.is_radial else self.axes

    @property
    def shape(self) -> tuple[int, ...]:
        if self.is_radial:
            return (self.cells[0],)
        return tuple(c + 1 for c in self.cells)

    @cached_property
    def axis_coords(self) -> tuple[NDArray[np.float64], ...]:
        h = self.h
        if self.is_radial:
            return ((np.arange(self.cells[0]) + 0.5) * h,)
        return tuple(o + h * np.arange(c + 1) for o, c in zip(self.origin, self.cells))

    @property
    def coords(self) -> tuple[NDArray[np.float64], ...]:
        """Node coordinates broadcast to ``shape`` (one array per axis)."""
        if self.axes == 1:
            return self.axis_coords
        return tuple(np.meshgrid(*self.axis_coords, indexing="ij"))

    @cached_property
    def axis_weights(self) -> tuple[NDArray[np.float64], ...]:
        if self.is_radial:
            raise ValueError("radial grids have no per-axis trapezoid weights")
        return tuple(_trapezoid_weights(c, self.h) for c in self.cells)

    @cached_property
    def weights(self) -> NDArray[np.float64]:
        """Quadrature weights (trapezoid, or exact shell volumes for radial)."""
        if self.is_radial:
            n = self.radial_dim
            edges = self.h * np.arange(self.cells[0] + 1)
            return sphere_area(n) * (edges[1:] ** n - edges[:-1] ** n) / n
        w = self.axis_weights[0]
        for wk in self.axis_weights[1:]:
            w = np.multiply.outer(w, wk)
        return w

    @property
    def measure(self) -> float:
        if self.is_radial:
            n = self.radial_dim
            return sphere_area(n) * self.lengths[0] ** n / n
        return float(np.prod(self.lengths))

    @cached_property
    def boundary_mask(self) -> NDArray[np.bool_]:
        """Nodes lying on the domain boundary (all False for radial grids)."""
        mask = np.zeros(self.shape, dtype=bool)
        if self.is_radial:
            return mask
        for ax in range(self.axes):
            idx = [slice(None)] * self.axes
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))


@dataclass(frozen=True)
class Field:
    """Snapshot of u (or v = u - a/(2b)) on a grid.

    Values are copied and marked read-only on construction.
    """

    values: NDArray[np.float64]
    grid: Grid
    bc: BoundaryKind = BoundaryKind.NEUMANN
    tag: str = "u"

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if self.tag not in ("u", "v"):
            raise ValueError(f"tag must be 'u' or 'v', got {self.tag!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "bc", BoundaryKind(self.bc))

    def with_values(self, values) -> Field:
        return Field(values, self.grid, self.bc, self.tag)

    def min_value(self) -> float:
        return float(np.min(self.values))

    def max_value(self) -> float:
        return float(np.max(self.values))


def to_v(f: Field, p: Params) -> Field:
    if f.tag != "u":
        raise ValueError(f"to_v expects a u-field, got tag {f.tag!r}")
    return Field(f.values - p.u_crit, f.grid, f.bc, "v")


def from_v(f: Field, p: Params) -> Field:
    if f.tag != "v":
        raise ValueError(f"from_v expects a v-field, got tag {f.tag!r}")
    return Field(f.values + p.u_crit, f.grid, f.bc, "u")


def face_differences(values: NDArray, grid: Grid) -> list[NDArray]:
    """Forward differences (y_{i+1} - y_i)/h along every axis."""
    return [np.diff(values, axis=ax) / grid.h for ax in range(values.ndim)]


def dirichlet_energy(values: NDArray, grid: Grid) -> float:
    """Face-based discrete integral of |grad y|^2.

    Each face difference is weighted by h times the transverse trapezoid
    weights; for radial grids by the face area.
    """
    if grid.is_radial:
        n = grid.radial_dim
        r_face = grid.h * np.arange(1, grid.cells[0])
        dy = np.diff(values) / grid.h
        return float(np.sum(sphere_area(n) * r_face ** (n - 1) * grid.h * dy**2))
    total = 0.0
    for ax, dy in enumerate(face_differences(values, grid)):
        w = np.ones(dy.shape)
        for k in range(grid.axes):
            if k == ax:
                continue
            shape = [1] * grid.axes
            shape[k] = -1
            w = w * grid.axis_weights[k].reshape(shape)
        total += float(np.sum(w * grid.h * dy**2))
    return total


def central_gradient_sq(values: NDArray, grid: Grid, bc: BoundaryKind) -> NDArray:
    """|grad y|^2 at nodes by central differences.

    Boundary nodes use the reflected (Neumann) or one-sided (Dirichlet)
    difference; radial cell 0 uses the symmetric ghost.
    """
    h = grid.h
    out = np.zeros_like(values)
    for ax in range(values.ndim):
        y = np.moveaxis(values, ax, 0)
        g = np.empty_like(y)
        g[1:-1] = (y[2:] - y[:-2]) / (2 * h)
        if grid.is_radial:
            g[0] = (y[1] - y[0]) / (2 * h)
            g[-1] = (y[-1] - y[-2]) / h if bc is BoundaryKind.DIRICHLET else (y[-1] - y[-2]) / (2 * h)
        elif bc is BoundaryKind.NEUMANN:
            g[0] = 0.0
            g[-1] = 0.0
        else:
            g[0] = (y[1] - y[0]) / h
            g[-1] = (y[-1] - y[-2]) / h
        out += np.moveaxis(g, 0, ax) ** 2
    return out
