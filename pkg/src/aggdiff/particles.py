"""Interacting particle system whose empirical measure approximates the
nonlocal model:

    dX^i = sqrt(2a) dB^i + (M/N) sum_{j != i} grad V_eps(X^i - X^j) dt

with V_eps the Gaussian of total mass 2b used by the PDE solver and M the
total mass of the initial density (M = 1 for probability densities).
Only the reaction-free case c = d = 0 is modelled.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numba
import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Field, Grid, Params

log = logging.getLogger(__name__)

_SAMPLE_STREAM = 0
_NOISE_STREAM = 1


def _generator(seed: int, stream: int, position: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream), advanced by ``position`` blocks.

    Each block is 2^128 draws long, so the noise of step k never overlaps
    that of any other step, whatever order the steps are computed in.
    """
    key = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    bitgen = np.random.Philox(key)
    if position:
        bitgen = bitgen.jumped(position)
    return np.random.Generator(bitgen)


@dataclass(frozen=True)
class ParticleState:
    positions: np.ndarray
    t: float
    seed: int
    step: int = 0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError("positions must be an (N, dim) array with N >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class ParticleConfig:
    N: int
    epsilon: float
    dt: float
    t_end: float
    total_mass: float = 1.0
    domain: str = "free"
    box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if not self.total_mass > 0:
            raise ValueError("total_mass must be positive")
        if self.domain not in ("free", "box"):
            raise ValueError("domain must be 'free' or 'box'")
        if self.domain == "box" and not self.box:
            raise ValueError("a reflecting box needs its bounds")


# ---------------------------------------------------------------- sampling


def _sample_interval(u: np.ndarray, x: np.ndarray, N: int, rng: np.random.Generator) -> np.ndarray:
    """Exact sampling of the piecewise-linear interpolant of u."""
    h = np.diff(x)
    cell_mass = 0.5 * (u[:-1] + u[1:]) * h
    cdf = np.cumsum(cell_mass)
    total = cdf[-1]
    r = rng.random(N) * total
    k = np.minimum(np.searchsorted(cdf, r, side="right"), len(cell_mass) - 1)
    # mass still to cover inside the chosen cell, in units of h
    c = (r - (cdf[k] - cell_mass[k])) / h[k]
    f0, f1 = u[k], u[k + 1]
    disc = np.maximum(f0 * f0 + 2.0 * (f1 - f0) * c, 0.0)
    denom = f0 + np.sqrt(disc)
    s = np.where(denom > 0, 2.0 * c / np.where(denom > 0, denom, 1.0), 0.0)
    return x[k] + np.clip(s, 0.0, 1.0) * h[k]


def _sample_rectangle(f: Field, N: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampling from the bilinear interpolant of a 2-D density."""
    xs, ys = f.grid.axis_coords
    interp = RegularGridInterpolator((xs, ys), f.values, method="linear")
    top = float(np.max(f.values))
    lo = np.array([xs[0], ys[0]])
    span = np.array([xs[-1] - xs[0], ys[-1] - ys[0]])
    out = np.empty((0, 2))
    while out.shape[0] < N:
        m = max(2 * (N - out.shape[0]), 1024)
        cand = lo + rng.random((m, 2)) * span
        keep = rng.random(m) * top < interp(cand)
        out = np.vstack([out, cand[keep]])
    return out[:N]


def sample_initial(u0: Field, N: int, seed: int) -> ParticleState:
    """N i.i.d. draws from u0 / mass(u0).

    Interval grids use the exact inverse CDF of the piecewise-linear
    interpolant; rectangles use rejection from the bilinear interpolant.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    vals = u0.values if u0.tag == "u" else None
    if vals is None:
        raise ValueError("sample_initial needs a u-field")
    if float(np.min(vals)) < 0 or not np.all(np.isfinite(vals)):
        raise ValueError("u0 must be finite and nonnegative")
    if not float(np.max(vals)) > 0:
        raise ValueError("u0 vanishes identically")
    rng = _generator(seed, _SAMPLE_STREAM)
    grid = u0.grid
    if grid.is_radial:
        raise ValueError("sampling from radial profiles is not supported")
    if grid.axes == 1:
        pos = _sample_interval(np.asarray(vals), grid.axis_coords[0], N, rng)[:, None]
    else:
        pos = _sample_rectangle(u0, N, rng)
    return ParticleState(pos, 0.0, seed, 0)


# ---------------------------------------------------------------- dynamics


def kernel_gradient(z: np.ndarray, epsilon: float, b: float) -> np.ndarray:
    """grad V_eps(z) for the Gaussian of mass 2b; z has shape (..., dim)."""
    dim = z.shape[-1]
    norm = 2.0 * b * (2.0 * math.pi * epsilon**2) ** (-dim / 2.0)
    r2 = np.sum(z * z, axis=-1, keepdims=True)
    return -z / epsilon**2 * norm * np.exp(-0.5 * r2 / epsilon**2)


@numba.njit(cache=True)
def _pair_sums(X, epsilon):
    """sum_j (X_i - X_j) exp(-|X_i - X_j|^2 / (2 eps^2)), each pair visited once."""
    N, dim = X.shape
    out = np.zeros((N, dim))
    inv = 0.5 / (epsilon * epsilon)
    for i in range(N):
        for j in range(i + 1, N):
            r2 = 0.0
            for k in range(dim):
                z = X[i, k] - X[j, k]
                r2 += z * z
            w = math.exp(-r2 * inv)
            for k in range(dim):
                zw = (X[i, k] - X[j, k]) * w
                out[i, k] += zw
                out[j, k] -= zw
    return out


def interaction_drift(positions: np.ndarray, epsilon: float, b: float, weight: float,
                      method: str = "compiled", chunk: int = 1024) -> np.ndarray:
    """weight * sum_{j != i} grad V_eps(X_i - X_j) by direct pairwise sums.

    ``method="compiled"`` runs a JIT-compiled double loop over pairs;
    ``method="numpy"`` evaluates the same sum with chunked array broadcasts.
    The j = i term is zero because grad V_eps(0) = 0.
    """
    X = np.ascontiguousarray(positions, dtype=float)
    if method == "compiled":
        dim = X.shape[1]
        norm = 2.0 * b * (2.0 * math.pi * epsilon**2) ** (-dim / 2.0)
        return -(weight * norm / epsilon**2) * _pair_sums(X, float(epsilon))
    if method != "numpy":
        raise ValueError(f"unknown method {method!r}")
    out = np.empty_like(X)
    for start in range(0, X.shape[0], chunk):
        block = X[start:start + chunk]
        z = block[:, None, :] - X[None, :, :]
        out[start:start + chunk] = kernel_gradient(z, epsilon, b).sum(axis=1)
    return weight * out


def _reflect(pos: np.ndarray, box) -> np.ndarray:
    out = pos.copy()
    for ax, (lo, hi) in enumerate(box):
        L = hi - lo
        y = np.mod(out[:, ax] - lo, 2.0 * L)
        out[:, ax] = lo + np.where(y > L, 2.0 * L - y, y)
    return out


def em_step(s: ParticleState, cfg: ParticleConfig, p: Params, dt: float | None = None) -> ParticleState:
    """One Euler-Maruyama step; noise comes from the (seed, step) block."""
    dt = cfg.dt if dt is None else dt
    X = s.positions
    drift = interaction_drift(X, cfg.epsilon, p.b, cfg.total_mass / s.N)
    move = float(np.max(np.abs(drift))) * dt
    if move > cfg.epsilon:
        log.warning("drift displacement %.3g exceeds epsilon=%.3g; reduce dt", move, cfg.epsilon)
    xi = _generator(s.seed, _NOISE_STREAM, s.step + 1).standard_normal(X.shape)
    Xn = X + drift * dt + math.sqrt(2.0 * p.a * dt) * xi
    if not np.all(np.isfinite(Xn)):
        raise FloatingPointError("particle positions became non-finite")
    if cfg.domain == "box":
        Xn = _reflect(Xn, cfg.box)
    return ParticleState(Xn, s.t + dt, s.seed, s.step + 1)


def simulate(s0: ParticleState, cfg: ParticleConfig, p: Params,
             record_times=None) -> list[ParticleState]:
    """Advance to cfg.t_end, returning the states at ``record_times``.

    Record times are rounded to the nearest step; t = 0 returns s0 itself.
    """
    if p.c != 0 or p.d != 0:
        raise ValueError("the particle system has no reaction; use c = d = 0")
    steps = int(round(cfg.t_end / cfg.dt))
    if record_times is None:
        record_times = [cfg.t_end]
    want = sorted({int(round(t / cfg.dt)) for t in record_times})
    if want and want[-1] > steps:
        raise ValueError("record times beyond t_end")
    out = []
    s = s0
    if want and want[0] == 0:
        out.append(s)
    for k in range(1, steps + 1):
        s = em_step(s, cfg, p)
        s = replace(s, t=k * cfg.dt)
        if k in want:
            out.append(s)
    return out


# ---------------------------------------------------------------- densities


def silverman_bandwidth(s: ParticleState) -> float:
    """Rule-of-thumb Gaussian bandwidth (Silverman in 1-D, Scott in 2-D)."""
    N, dim = s.positions.shape
    sd = float(np.mean(np.std(s.positions, axis=0)))
    if sd == 0:
        sd = 1.0
    if dim == 1:
        return 1.06 * sd * N ** (-0.2)
    return sd * N ** (-1.0 / (dim + 4))


def kde_density(s: ParticleState, grid: Grid, bandwidth: float | None = None,
                total_mass: float = 1.0, chunk: int = 512) -> Field:
    """Gaussian KDE on the grid nodes, rescaled so its quadrature mass is total_mass."""
    if grid.is_radial:
        raise ValueError("KDE on radial grids is not supported")
    if s.dim != grid.axes:
        raise ValueError("particle and grid dimensions differ")
    bw = silverman_bandwidth(s) if bandwidth is None else bandwidth
    if not bw > 0:
        raise ValueError("bandwidth must be positive")
    pts = np.stack([c.ravel() for c in grid.coords], axis=-1)
    acc = np.zeros(pts.shape[0])
    for start in range(0, s.N, chunk):
        block = s.positions[start:start + chunk]
        z = pts[:, None, :] - block[None, :, :]
        acc += np.exp(-0.5 * np.sum(z * z, axis=-1) / bw**2).sum(axis=1)
    dens = acc.reshape(grid.shape)
    m = grid.integrate(dens)
    if not m > 0:
        raise ValueError("all particles are far outside the grid")
    return Field(dens * (total_mass / m), grid, "neumann", "u")


@dataclass
class ComparisonSeries:
    times: np.ndarray
    l1_error: np.ndarray


def l1_distance(f: Field, g: Field) -> float:
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return f.grid.integrate(np.abs(f.values - g.values))


def compare_to_pde(states: list[ParticleState], pde_snapshots: list[tuple[float, Field]],
                   times, total_mass: float, bandwidth: float | None = None,
                   tol: float = 1e-9) -> ComparisonSeries:
    """L1 distance between the particle KDE and the PDE field at each time."""
    out = []
    for t in times:
        ps = [s for s in states if abs(s.t - t) <= tol * max(1.0, abs(t))]
        fs = [f for tt, f in pde_snapshots if abs(tt - t) <= tol * max(1.0, abs(t))]
        if not ps or not fs:
            raise ValueError(f"no particle state or PDE snapshot at t={t:g}")
        if fs[0].tag != "u":
            raise ValueError("compare_to_pde needs u-snapshots")
        kde = kde_density(ps[0], fs[0].grid, bandwidth, total_mass)
        out.append(l1_distance(kde, fs[0]))
    return ComparisonSeries(np.asarray(times, dtype=float), np.array(out))
