"""Explicit Barenblatt-type solutions of dv/dt + b Lap(v^2) = 0.

Two families are available: positive bumps, which concentrate and blow up
at t = T, and negative bumps, which spread for all t >= 0. Bumps with
pairwise disjoint supports can be superposed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Grid, Params, sphere_area

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class BarenblattBump:
    sign: str
    T: float
    x0: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.sign not in (POSITIVE, NEGATIVE):
            raise ValueError(f"sign must be {POSITIVE!r} or {NEGATIVE!r}")
        if not self.T > 0:
            raise ValueError(f"time offset T must be > 0, got {self.T}")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "x0", tuple(float(c) for c in x0))

    @property
    def is_positive(self) -> bool:
        return self.sign == POSITIVE

    def clock(self, t: float) -> float:
        """T - t for positive bumps, T + t for negative ones."""
        if self.is_positive:
            if t >= self.T:
                raise ValueError(f"positive bump only defined for t < T={self.T}, got t={t}")
            return self.T - t
        return self.T + t


@dataclass
class MultiBumpConfig:
    bumps: list[BarenblattBump]
    tau: float | None = None

    def __post_init__(self):
        tmin = min((bp.T for bp in self.bumps if bp.is_positive), default=math.inf)
        if self.tau is None:
            self.tau = tmin

    @property
    def positives(self) -> list[BarenblattBump]:
        return [bp for bp in self.bumps if bp.is_positive]

    @property
    def negatives(self) -> list[BarenblattBump]:
        return [bp for bp in self.bumps if not bp.is_positive]


def _distance(x, x0: tuple[float, ...], n: int):
    x = np.asarray(x, dtype=float)
    if n == 1:
        return np.abs(x - x0[0])
    if x.shape[-1] != len(x0):
        raise ValueError(f"points have {x.shape[-1]} coordinates, bump centre has {len(x0)}")
    return np.sqrt(np.sum((x - np.asarray(x0)) ** 2, axis=-1))


def bump_profile(bump: BarenblattBump, r, t: float, p: Params):
    """Bump value as a function of the distance r to its centre."""
    n = p.n
    s = bump.clock(t)
    val = (s ** (2.0 / (n + 2)) - np.asarray(r, dtype=float) ** 2 / (4.0 * (n + 2))) / (p.b * s)
    val = np.maximum(val, 0.0)
    return val if bump.is_positive else -val


def bump_eval(bump: BarenblattBump, x, t: float, p: Params):
    """v-value of one bump at point(s) x.

    For n = 1, ``x`` may be a scalar or an array of coordinates; for n >= 2
    the last axis of ``x`` holds the n coordinates.
    """
    return bump_profile(bump, _distance(x, bump.x0, p.n), t, p)


def support_radius(bump: BarenblattBump, t: float, p: Params | int) -> float:
    n = p if isinstance(p, int) else p.n
    return 2.0 * math.sqrt(n + 2) * bump.clock(t) ** (1.0 / (n + 2))


@dataclass
class ConditionCheck:
    name: str
    bumps: tuple[int, ...]
    lhs: float
    rhs: float
    ok: bool
    note: str = ""


@dataclass
class ValidityReport:
    checks: list[ConditionCheck] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[ConditionCheck]:
        return [c for c in self.checks if not c.ok]


def negative_positive_lhs(Tj: float, Tl: float, tau: float, n: int) -> tuple[float, str]:
    """Worst-case left side of the negative/positive separation over [0, tau].

    (t + Tj)^q + (Tl - t)^q with q = 1/(n+2) is concave in t, so the maximum
    is at t = 0, t = tau, or the interior critical point (Tl - Tj)/2.
    """
    q = 1.0 / (n + 2)
    diff = Tl - Tj
    if diff <= 0:
        return Tj**q + Tl**q, "T_l - T_j <= 0"
    if diff >= 2 * tau:
        return (tau + Tj) ** q + (Tl - tau) ** q, "T_l - T_j >= 2 tau"
    return 2.0 ** ((n + 1.0) / (n + 2.0)) * (Tl + Tj) ** q, "0 <= T_l - T_j < 2 tau"


def validate_multibump(cfg: MultiBumpConfig, p: Params, t_max: float | None = None,
                       slack: float = 1e-12) -> ValidityReport:
    """Check every sufficient condition for the superposition to be a solution.

    Strict inequalities are tested as lhs + slack < rhs. When there are no
    positive bumps (tau = inf), pairwise negative conditions are checked at
    the finite horizon ``t_max``.
    """
    n = p.n
    q = 1.0 / (n + 2)
    scale = 2.0 * math.sqrt(n + 2)
    rep = ValidityReport()
    tau = cfg.tau
    tmin = min((bp.T for bp in cfg.positives), default=math.inf)
    rep.checks.append(ConditionCheck("tau <= min positive T", (), tau, tmin, tau <= tmin))

    horizon = tau
    if math.isinf(tau):
        horizon = t_max
    idx = {id(bp): k for k, bp in enumerate(cfg.bumps)}

    def dist(b1, b2):
        return float(np.linalg.norm(np.subtract(b1.x0, b2.x0)))

    negs, poss = cfg.negatives, cfg.positives
    for i, bj in enumerate(negs):
        for bk in negs[i + 1:]:
            pair = (idx[id(bj)], idx[id(bk)])
            rhs = dist(bj, bk) / scale
            if horizon is None:
                rep.checks.append(ConditionCheck("negative-negative separation", pair, math.nan,
                                                 rhs, False, "tau is infinite: horizon t_max required"))
                continue
            lhs = (horizon + bj.T) ** q + (horizon + bk.T) ** q
            rep.checks.append(ConditionCheck("negative-negative separation", pair, lhs, rhs,
                                             lhs + slack < rhs, f"evaluated at t={horizon:g}"))

    for bj in negs:
        for bl in poss:
            pair = (idx[id(bj)], idx[id(bl)])
            lhs, case = negative_positive_lhs(bj.T, bl.T, tau, n)
            rhs = dist(bj, bl) / scale
            rep.checks.append(ConditionCheck("negative-positive separation", pair, lhs, rhs,
                                             lhs + slack < rhs, case))

    # positive bumps only shrink, so disjointness at t = 0 is enough
    for i, bi in enumerate(poss):
        for bl in poss[i + 1:]:
            pair = (idx[id(bi)], idx[id(bl)])
            lhs = bi.T**q + bl.T**q
            rhs = dist(bi, bl) / scale
            rep.checks.append(ConditionCheck("positive-positive separation", pair, lhs, rhs,
                                             lhs + slack < rhs, "at t=0"))

    bound = (p.a / 2.0) ** (-1.0 - 2.0 / n)
    for bj in negs:
        rep.checks.append(ConditionCheck("negative lower bound T_j > (a/2)^(-1-2/n)",
                                         (idx[id(bj)],), bj.T, bound, bj.T > bound,
                                         "ensures v >= -a/(2b), i.e. u >= 0"))
    return rep


class InvalidConfigError(ValueError):
    def __init__(self, report: ValidityReport):
        lines = [f"{c.name} {c.bumps}: lhs={c.lhs:.12g} rhs={c.rhs:.12g} ({c.note})"
                 for c in report.failures]
        super().__init__("inadmissible bump configuration:\n  " + "\n  ".join(lines))
        self.report = report


def multibump_eval(cfg: MultiBumpConfig, x, t: float, p: Params, t_max: float | None = None,
                   check: bool = True):
    """Superposed v-value at x for t in [0, tau)."""
    if t >= cfg.tau:
        raise ValueError(f"t={t} outside the existence window [0, {cfg.tau})")
    if check:
        rep = validate_multibump(cfg, p, t_max=t_max if t_max is not None else max(t, 0.0))
        if not rep.valid:
            raise InvalidConfigError(rep)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape if p.n == 1 else x.shape[:-1])
    for bp in cfg.bumps:
        out = out + bump_eval(bp, x, t, p)
    return out if out.ndim else float(out)


def _grid_points(grid: Grid):
    if grid.axes == 1:
        return grid.axis_coords[0]
    return np.stack(grid.coords, axis=-1)


def multibump_on_grid(cfg: MultiBumpConfig, grid: Grid, t: float, p: Params) -> np.ndarray:
    """Superposition sampled on a grid (radial grids measure r from the origin)."""
    if grid.is_radial:
        r = grid.axis_coords[0]
        out = np.zeros_like(r)
        for bp in cfg.bumps:
            if any(c != 0.0 for c in bp.x0):
                raise ValueError("radial grids need every bump centred at the origin")
            out = out + bump_profile(bp, r, t, p)
        return out
    pts = _grid_points(grid)
    out = np.zeros(grid.shape)
    for bp in cfg.bumps:
        out = out + bump_eval(bp, pts, t, p)
    return out


def residual_scale(cfg: MultiBumpConfig, t: float, p: Params) -> float:
    """max over bumps of b * peak(v)^2 / R^4, the size of d^4(b v^2)/dx^4."""
    out = 0.0
    for bp in cfg.bumps:
        s = bp.clock(t)
        peak = s ** (2.0 / (p.n + 2)) / (p.b * s)
        R = support_radius(bp, t, p)
        out = max(out, p.b * peak**2 / R**4)
    return out


def residual_check(cfg: MultiBumpConfig, grid: Grid, t: float, p: Params,
                   dt: float = 1e-5) -> float:
    """Max of |dv/dt + b Lap(v^2)| by central differences at admissible nodes.

    Nodes closer than 2h to any free boundary (at t - dt, t, t + dt) are
    skipped, as are the outermost nodes of the grid.
    """
    if t - dt < 0.0 or t + dt >= cfg.tau:
        raise ValueError("need dt <= t and t + dt < tau for the central time difference")
    h = grid.h
    v = multibump_on_grid(cfg, grid, t, p)
    vt = (multibump_on_grid(cfg, grid, t + dt, p) - multibump_on_grid(cfg, grid, t - dt, p)) / (2 * dt)
    w = v**2
    if grid.is_radial:
        r = grid.axis_coords[0]
        wp = np.concatenate(([w[0]], w, [w[-1]]))
        lap = (wp[2:] - 2 * wp[1:-1] + wp[:-2]) / h**2 + (p.n - 1) / r * (wp[2:] - wp[:-2]) / (2 * h)
        keep = np.ones(w.shape, dtype=bool)
        keep[-1] = False
        dists = [r for _ in cfg.bumps]
    else:
        lap = np.zeros_like(w)
        inner = [slice(1, -1)] * w.ndim
        for ax in range(w.ndim):
            lo, hi = list(inner), list(inner)
            lo[ax] = slice(0, -2)
            hi[ax] = slice(2, None)
            lap[tuple(inner)] += (w[tuple(hi)] - 2 * w[tuple(inner)] + w[tuple(lo)]) / h**2
        keep = ~grid.boundary_mask
        pts = _grid_points(grid)
        dists = [_distance(pts, bp.x0, p.n) for bp in cfg.bumps]
    for bp, d in zip(cfg.bumps, dists):
        for tt in (t - dt, t, t + dt):
            keep &= np.abs(d - support_radius(bp, tt, p)) >= 2 * h
    res = np.abs(vt + p.b * lap)[keep]
    return float(res.max()) if res.size else 0.0


def bump_mass(bump: BarenblattBump, t: float, p: Params, cells: int = 4000) -> float:
    """Integral of one bump over R^n by radial quadrature."""
    R = support_radius(bump, t, p)
    edges = np.linspace(0.0, R, cells + 1)
    r = 0.5 * (edges[1:] + edges[:-1])
    shell = sphere_area(p.n) * (edges[1:] ** p.n - edges[:-1] ** p.n) / p.n
    return float(np.sum(bump_profile(bump, r, t, p) * shell))
