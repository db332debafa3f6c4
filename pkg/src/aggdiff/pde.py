"""Explicit conservative time stepping for the local and nonlocal models.

Local model (u- or v-form):

    du/dt = Lap phi(u) + g(u),          phi(u) = (a - b u) u

Nonlocal model, a mollified regularisation that stays well posed when
u > a/(2b):

    du/dt = div(a grad u - u grad(V_eps * u)) + g(u)

with V_eps a Gaussian of total mass 2b. Both are written as a divergence
of face fluxes, so mass is conserved to roundoff under zero-flux
boundaries. Dirichlet boundary nodes are pinned at u = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import ndimage

from .core import (BoundaryKind, Field, Grid, Params, flux_phi, flux_phi_prime, from_v,
                   reaction_g, reaction_g_prime, sphere_area, to_v)

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-10

PARABOLICITY_LOST = "parabolicity_lost"
NEGATIVE_DENSITY = "negative_density"
VALUE_CAP_EXCEEDED = "value_cap_exceeded"
COMPLETED = "completed"


# ---------------------------------------------------------------- geometry


@lru_cache(maxsize=64)
def _transverse(grid: Grid, ax: int) -> np.ndarray:
    """Trapezoid weights of the axes other than ``ax``, shaped for a face array."""
    w = np.ones([1] * grid.axes)
    for k in range(grid.axes):
        if k == ax:
            continue
        shape = [1] * grid.axes
        shape[k] = -1
        w = w * grid.axis_weights[k].reshape(shape)
    return w


@lru_cache(maxsize=64)
def _radial_faces(grid: Grid) -> np.ndarray:
    """Areas of the faces r = h, 2h, ..., R (the origin face has zero flux)."""
    n = grid.radial_dim
    r = grid.h * np.arange(1, grid.cells[0] + 1)
    return sphere_area(n) * r ** (n - 1)


def _divergence(fluxes: list[np.ndarray], grid: Grid) -> np.ndarray:
    """(sum of outgoing-positive face fluxes) / control volume, per node.

    ``fluxes[ax]`` lives on the faces between consecutive nodes along ``ax``
    and is already integrated over the transverse extent.
    """
    out = np.zeros(grid.shape)
    for ax, G in enumerate(fluxes):
        lo = [slice(None)] * grid.axes
        hi = [slice(None)] * grid.axes
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        out[tuple(lo)] += G
        out[tuple(hi)] -= G
    return out / grid.weights


def _local_rate(y: np.ndarray, grid: Grid, bc: BoundaryKind, flux: Callable,
                reaction: Callable, pinned: float) -> np.ndarray:
    F = flux(y)
    h = grid.h
    if grid.is_radial:
        areas = _radial_faces(grid)
        G = np.empty(grid.cells[0])
        G[:-1] = areas[:-1] * np.diff(F) / h
        if bc is BoundaryKind.DIRICHLET:
            G[-1] = areas[-1] * (flux(pinned) - F[-1]) / h
        else:
            G[-1] = 0.0
        div = np.empty_like(y)
        div[0] = G[0]
        div[1:] = np.diff(G)
        return div / grid.weights + reaction(y)
    fluxes = [_transverse(grid, ax) * np.diff(F, axis=ax) / h for ax in range(grid.axes)]
    rate = _divergence(fluxes, grid) + reaction(y)
    if bc is BoundaryKind.DIRICHLET:
        rate[grid.boundary_mask] = 0.0
    return rate


def _forms(p: Params, tag: str):
    """(flux, reaction, pinned Dirichlet value, margin) for the given variable."""
    if tag == "u":
        return (lambda u: flux_phi(u, p), lambda u: reaction_g(u, p), 0.0,
                lambda u: flux_phi_prime(u, p))
    k = p.u_crit
    return (lambda v: -p.b * v * v,
            lambda v: (p.c - p.d * k - p.d * v) * (v + k),
            -k,
            lambda v: -2.0 * p.b * v)


def _pin(values: np.ndarray, grid: Grid, bc: BoundaryKind, pinned: float) -> np.ndarray:
    if bc is BoundaryKind.DIRICHLET and not grid.is_radial:
        values = values.copy()
        values[grid.boundary_mask] = pinned
    return values


# ---------------------------------------------------------------- local model


def step_local(f: Field, p: Params, dt: float) -> Field:
    """One forward-Euler step of the local model, in f's own variable."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    flux, reaction, pinned, _ = _forms(p, f.tag)
    y = f.values
    y_new = y + dt * _local_rate(y, f.grid, f.bc, flux, reaction, pinned)
    return f.with_values(_pin(y_new, f.grid, f.bc, pinned))


def _effective_axes(grid: Grid) -> float:
    # the radial stencil at the centre cell has weight n/h^2
    if grid.is_radial:
        return max(1.0, grid.radial_dim / 2.0)
    return float(grid.axes)


def cfl_dt(f: Field, p: Params, sigma: float = 0.4) -> float:
    """Stable explicit step for the local model.

    dt = sigma h^2 / (2 n_dims max|phi'|), capped by sigma / max|g'|.
    """
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    u = f.values if f.tag == "u" else f.values + p.u_crit
    return _cfl_local(u, f.grid, p, sigma)


def _cfl_local(u: np.ndarray, grid: Grid, p: Params, sigma: float) -> float:
    dphi = max(float(np.max(np.abs(flux_phi_prime(u, p)))), EPS_FLOOR)
    dt = sigma * grid.h**2 / (2.0 * _effective_axes(grid) * dphi)
    return min(dt, _reaction_cap(u, p, sigma))


def _reaction_cap(u: np.ndarray, p: Params, sigma: float) -> float:
    dg = max(float(np.max(np.abs(reaction_g_prime(u, p)))), EPS_FLOOR)
    return sigma / dg


# ---------------------------------------------------------------- nonlocal model


@dataclass(frozen=True)
class Kernel:
    """Gaussian V_eps of total mass 2b, stored as a normalised 1-D factor.

    The n-D kernel is 2b * prod_k g(x_k), with sum(g) * h = 1 exactly after
    renormalisation.
    """

    epsilon: float
    b: float
    h: float
    dims: int
    g: np.ndarray = field(repr=False)

    @property
    def half_width(self) -> int:
        return (len(self.g) - 1) // 2

    @property
    def mass(self) -> float:
        return 2.0 * self.b * float(np.sum(self.g) * self.h) ** self.dims

    def samples(self) -> np.ndarray:
        """Full n-D kernel samples."""
        out = 2.0 * self.b * self.g
        for _ in range(self.dims - 1):
            out = np.multiply.outer(out, self.g)
        return out


def make_kernel(grid: Grid, p: Params, epsilon: float, cutoff: float = 8.0) -> Kernel:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if grid.is_radial:
        raise ValueError("the nonlocal model is implemented on interval and rectangle grids only")
    h = grid.h
    M = max(1, int(math.ceil(cutoff * epsilon / h)))
    x = h * np.arange(-M, M + 1)
    g = np.exp(-0.5 * (x / epsilon) ** 2)
    g /= g.sum() * h
    return Kernel(epsilon, p.b, h, grid.axes, g)


def convolve(kernel: Kernel, values: np.ndarray, bc: BoundaryKind) -> np.ndarray:
    """V_eps * u on the grid.

    Neumann boxes use even reflection about the boundary nodes, so constant
    states give a constant potential; Dirichlet boxes extend u by zero.
    """
    mode = "mirror" if bc is BoundaryKind.NEUMANN else "constant"
    out = np.asarray(values, dtype=float)
    for ax in range(out.ndim):
        out = ndimage.convolve1d(out, kernel.g, axis=ax, mode=mode, cval=0.0) * kernel.h
    return 2.0 * kernel.b * out


def _nonlocal_rate(u: np.ndarray, grid: Grid, bc: BoundaryKind, p: Params,
                   kernel: Kernel) -> tuple[np.ndarray, float]:
    W = convolve(kernel, u, bc)
    h = grid.h
    fluxes = []
    vmax = 0.0
    for ax in range(grid.axes):
        du = np.diff(u, axis=ax) / h
        vel = np.diff(W, axis=ax) / h
        lo = [slice(None)] * grid.axes
        hi = [slice(None)] * grid.axes
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        upwind = np.where(vel > 0, u[tuple(lo)], u[tuple(hi)])
        fluxes.append(_transverse(grid, ax) * (p.a * du - upwind * vel))
        vmax += float(np.max(np.abs(vel))) if vel.size else 0.0
    rate = _divergence(fluxes, grid) + reaction_g(u, p)
    if bc is BoundaryKind.DIRICHLET:
        rate[grid.boundary_mask] = 0.0
    return rate, vmax


def step_nonlocal(f: Field, p: Params, kernel: Kernel, dt: float) -> Field:
    """One forward-Euler step of the nonlocal model (u-form only)."""
    if f.tag != "u":
        raise ValueError("the nonlocal stepper works on u-fields")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not math.isclose(kernel.h, f.grid.h, rel_tol=1e-12) or kernel.dims != f.grid.axes:
        raise ValueError("kernel was built for a different grid")
    rate, _ = _nonlocal_rate(f.values, f.grid, f.bc, p, kernel)
    return f.with_values(_pin(f.values + dt * rate, f.grid, f.bc, 0.0))


def cfl_dt_nonlocal(f: Field, p: Params, kernel: Kernel, sigma: float = 0.4) -> float:
    """Positivity-preserving explicit step for the upwind nonlocal scheme."""
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    _, vsum = _nonlocal_rate(f.values, f.grid, f.bc, p, kernel)
    return _cfl_nonlocal(f.values, f.grid, p, vsum, sigma)


def _cfl_nonlocal(u: np.ndarray, grid: Grid, p: Params, vsum: float, sigma: float) -> float:
    h = grid.h
    rate = 2.0 * grid.axes * p.a / h**2 + 2.0 * vsum / h
    return min(sigma / rate, _reaction_cap(u, p, sigma))


# ---------------------------------------------------------------- driver


@dataclass
class SolverConfig:
    t_end: float
    model: str = "local"
    epsilon: float | None = None
    dt: float | None = None
    sigma: float = 0.4
    breakdown_policy: str = "halt"
    output_stride: int = 1
    value_cap: float = 1e12
    parabolicity_tol: float = 1e-12
    max_steps: int | None = None

    def __post_init__(self):
        if self.model not in ("local", "nonlocal"):
            raise ValueError(f"model must be 'local' or 'nonlocal', got {self.model!r}")
        if self.model == "nonlocal" and not (self.epsilon is not None and self.epsilon > 0):
            raise ValueError("the nonlocal model needs epsilon > 0")
        if not 0 < self.sigma <= 1:
            raise ValueError("sigma must lie in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("fixed dt must be positive")
        if self.breakdown_policy not in ("halt", "continue_with_event"):
            raise ValueError("breakdown_policy must be 'halt' or 'continue_with_event'")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")


@dataclass
class Event:
    t: float
    kind: str
    detail: str = ""


@dataclass
class RunResult:
    trajectory: list[tuple[float, Field]]
    events: list[Event]
    trusted: bool = True
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.trajectory])

    @property
    def final(self) -> Field:
        return self.trajectory[-1][1]

    @property
    def completed(self) -> bool:
        return any(e.kind == COMPLETED for e in self.events)

    def event_kinds(self) -> list[str]:
        return [e.kind for e in self.events]


def clip_step(t: float, dt: float, t_end: float) -> tuple[float, bool]:
    """(dt, last): shorten the step to land on t_end.

    A step that would leave less than 1e-9 dt before t_end is stretched to
    reach it, so round-off never produces a sliver step at the end.
    """
    if t + dt * (1.0 + 1e-9) >= t_end:
        return t_end - t, True
    return dt, False


def run(f0: Field, p: Params, cfg: SolverConfig) -> RunResult:
    """Integrate from f0 to cfg.t_end, monitoring invariants.

    The local model refuses to integrate across a - 2bu < 0: with the halt
    policy it stops at the first such step; with continue_with_event it
    goes on but the result is marked untrusted.
    """
    if not np.all(np.isfinite(f0.values)):
        raise ValueError("initial field has non-finite values")
    grid, bc = f0.grid, f0.bc
    if cfg.model == "nonlocal":
        if f0.tag != "u":
            raise ValueError("the nonlocal model runs on u-fields; convert with from_v")
        kernel = make_kernel(grid, p, cfg.epsilon)
        flux = reaction = None
        pinned = 0.0
    else:
        kernel = None
        flux, reaction, pinned, _ = _forms(p, f0.tag)
    shift = 0.0 if f0.tag == "u" else p.u_crit

    y = _pin(np.array(f0.values, dtype=float), grid, bc, pinned)
    t = 0.0
    traj = [(t, f0.with_values(y))]
    events: list[Event] = []
    trusted = True
    seen: set[str] = set()

    def monitor(y, t) -> bool:
        """Record events at time t; return True if the run must stop."""
        nonlocal trusted
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > cfg.value_cap:
            events.append(Event(t, VALUE_CAP_EXCEEDED, "non-finite or capped values"))
            return True
        u = y + shift
        if cfg.model == "local":
            margin = float(np.min(flux_phi_prime(u, p)))
            if margin < -cfg.parabolicity_tol * p.a and PARABOLICITY_LOST not in seen:
                seen.add(PARABOLICITY_LOST)
                events.append(Event(t, PARABOLICITY_LOST, f"min(a - 2bu) = {margin:.6g}"))
                if cfg.breakdown_policy == "halt":
                    return True
                trusted = False
                log.warning("continuing past parabolicity loss at t=%g; output untrusted", t)
        umin = float(np.min(u))
        if umin < -1e-12 and NEGATIVE_DENSITY not in seen:
            seen.add(NEGATIVE_DENSITY)
            events.append(Event(t, NEGATIVE_DENSITY, f"min u = {umin:.6g}"))
        return False

    steps = 0
    halted = monitor(y, t)
    while not halted and t < cfg.t_end:
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break
        if kernel is not None:
            rate, vsum = _nonlocal_rate(y, grid, bc, p, kernel)
            dt = cfg.dt or _cfl_nonlocal(y, grid, p, vsum, cfg.sigma)
        else:
            rate = _local_rate(y, grid, bc, flux, reaction, pinned)
            dt = cfg.dt or _cfl_local(y + shift, grid, p, cfg.sigma)
        dt, last = clip_step(t, dt, cfg.t_end)
        y = _pin(y + dt * rate, grid, bc, pinned)
        t = cfg.t_end if last else t + dt
        steps += 1
        halted = monitor(y, t)
        if halted or last or steps % cfg.output_stride == 0:
            traj.append((t, f0.with_values(y)))
    if not halted and t >= cfg.t_end:
        events.append(Event(t, COMPLETED))
    return RunResult(traj, events, trusted, steps)


def run_v_form(v0: Field, p: Params, cfg: SolverConfig) -> RunResult:
    """Integrate the v = u - a/(2b) formulation.

    The local model steps dv/dt = -b Lap(v^2) + h(v) directly, which avoids
    cancellation around a/(2b); the nonlocal model is run on u and mapped
    back.
    """
    if v0.tag != "v":
        raise ValueError("run_v_form expects a v-field")
    if cfg.model == "local":
        return run(v0, p, cfg)
    res = run(from_v(v0, p), p, cfg)
    res.trajectory = [(t, to_v(f, p)) for t, f in res.trajectory]
    return res
