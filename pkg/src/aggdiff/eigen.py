"""First Dirichlet eigenpair and Neumann spectrum of -Lap.

The Dirichlet eigenfunction is normalised to unit integral, which is what
makes A(t) = int phi u a weighted mean of u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import BoundaryKind, Field, Grid


class EigenConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"inverse iteration did not converge after {iterations} "
                         f"iterations (last residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class EigenPair:
    mu: float
    phi: Field
    normalization: float
    source: str
    phi_fn: Callable | None = None
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class NeumannSpectrum:
    lambdas: np.ndarray

    @property
    def K(self) -> int:
        return len(self.lambdas)


def _require_cartesian(grid: Grid):
    if grid.geometry not in ("interval", "rectangle"):
        raise ValueError(f"{grid.geometry} geometry not supported; use an interval or rectangle")


def dirichlet_first_analytic(grid: Grid) -> EigenPair:
    """Closed-form first Dirichlet eigenpair with unit-integral eigenfunction."""
    _require_cartesian(grid)
    mu = sum((math.pi / L) ** 2 for L in grid.lengths)
    amp = math.prod(math.pi / (2.0 * L) for L in grid.lengths)
    origin, lengths = grid.origin, grid.lengths

    def phi_fn(*xs):
        out = amp
        for x, o, L in zip(xs, origin, lengths):
            out = out * np.sin(math.pi * (np.asarray(x) - o) / L)
        return out

    vals = phi_fn(*grid.coords)
    vals = np.where(grid.boundary_mask, 0.0, vals)
    f = Field(vals, grid, BoundaryKind.DIRICHLET)
    return EigenPair(mu, f, grid.integrate(vals), "analytic", phi_fn=phi_fn)


def dirichlet_laplacian(grid: Grid) -> sp.csc_matrix:
    """Standard second-order -Lap on interior nodes (5-point in 2D)."""
    _require_cartesian(grid)
    h2 = grid.h**2
    mats = [sp.diags([-np.ones(c - 2), 2 * np.ones(c - 1), -np.ones(c - 2)], [-1, 0, 1]) / h2
            for c in grid.cells]
    if len(mats) == 1:
        return sp.csc_matrix(mats[0])
    ix, iy = (sp.identity(c - 1) for c in grid.cells)
    return sp.csc_matrix(sp.kron(mats[0], iy) + sp.kron(ix, mats[1]))


def dirichlet_first_numeric(grid: Grid, tol: float = 1e-10, max_iter: int = 10000) -> EigenPair:
    """Inverse power iteration (shift 0) on the discrete Dirichlet Laplacian.

    Starts from all ones on the interior; stops when the eigen-residual
    ||L phi - mu phi|| / ||phi|| drops below ``tol``.
    """
    _require_cartesian(grid)
    if any(c - 1 < 8 for c in grid.cells):
        raise ValueError("need at least 8 interior nodes per axis")
    L = dirichlet_laplacian(grid)
    lu = splu(L)
    x = np.ones(L.shape[0])
    x /= np.linalg.norm(x)
    mu = float(x @ (L @ x))
    resid = math.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        Lx = L @ x
        mu = float(x @ Lx)
        resid = float(np.linalg.norm(Lx - mu * x))
        if resid < tol * max(1.0, mu):
            break
    else:
        raise EigenConvergenceError(resid, max_iter)

    interior = tuple(slice(1, -1) for _ in grid.cells)
    vals = np.zeros(grid.shape)
    vals[interior] = x.reshape(tuple(c - 1 for c in grid.cells))
    if vals.sum() < 0:
        vals = -vals
    vals /= grid.integrate(vals)
    f = Field(vals, grid, BoundaryKind.DIRICHLET)
    return EigenPair(mu, f, grid.integrate(vals), "numeric", residual=resid, iterations=it)


def rayleigh_quotient(ep: EigenPair) -> float:
    """Discrete Rayleigh quotient of ``ep.phi`` for the Dirichlet stencil."""
    grid = ep.phi.grid
    interior = tuple(slice(1, -1) for _ in grid.cells)
    x = ep.phi.values[interior].ravel()
    return float(x @ (dirichlet_laplacian(grid) @ x) / (x @ x))


def neumann_spectrum_analytic(grid: Grid, K: int) -> NeumannSpectrum:
    """First K Neumann eigenvalues of -Lap, ascending, lambda_1 = 0."""
    _require_cartesian(grid)
    if K < 1:
        raise ValueError("K must be >= 1")
    if grid.axes == 1:
        k = np.arange(K)
        return NeumannSpectrum((k * math.pi / grid.lengths[0]) ** 2)
    Lx, Ly = grid.lengths
    # enough index pairs to be sure the K smallest are included
    m = int(math.ceil(math.sqrt(K))) + 1
    i, j = np.meshgrid(np.arange(K + m), np.arange(K + m), indexing="ij")
    vals = np.sort(((i * math.pi / Lx) ** 2 + (j * math.pi / Ly) ** 2).ravel())
    return NeumannSpectrum(vals[:K])
