"""Functionals used to track dissipation and blow-up along a run.

All spatial integrals use the grid quadrature weights (trapezoid, or shell
volumes on radial grids), the same weights that normalise the Dirichlet
eigenfunction, so Jensen's inequality holds exactly at the discrete level.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .core import Field, Params, central_gradient_sq, dirichlet_energy, flux_phi_prime
from .eigen import EigenPair
from .pde import Event, RunResult

U_FLOOR = 1e-14
NEGATIVE_TOL = 1e-10


def _u_values(f: Field, p: Params) -> np.ndarray:
    return f.values if f.tag == "u" else f.values + p.u_crit


def _v_values(f: Field, p: Params) -> np.ndarray:
    return f.values if f.tag == "v" else f.values - p.u_crit


def mass(f: Field) -> float:
    return f.grid.integrate(f.values)


def _check_nonnegative(u: np.ndarray):
    umin = float(np.min(u))
    if umin < -NEGATIVE_TOL:
        raise ValueError(f"entropy needs u >= 0, found min u = {umin:.3e}")


def entropy(f: Field, p: Params) -> float:
    """E = int a u (log u - 1) - b u^2, with u log u -> 0 below U_FLOOR."""
    u = _u_values(f, p)
    _check_nonnegative(u)
    pos = u > U_FLOOR
    ulogu = np.zeros_like(u)
    ulogu[pos] = u[pos] * (np.log(u[pos]) - 1.0)
    return f.grid.integrate(p.a * ulogu - p.b * u**2)


def entropy_dissipation(f: Field, p: Params) -> float:
    """-int (a - 2bu)^2 |grad u|^2 / u with central-difference gradients."""
    u = _u_values(f, p)
    _check_nonnegative(u)
    g2 = central_gradient_sq(u, f.grid, f.bc)
    integrand = flux_phi_prime(u, p) ** 2 * g2 / np.maximum(u, U_FLOOR)
    return -f.grid.integrate(integrand)


def parabolicity_margin(f: Field, p: Params) -> float:
    """min over nodes of a - 2bu; <= 0 means parabolicity is lost somewhere."""
    return float(np.min(flux_phi_prime(_u_values(f, p), p)))


# ---------------------------------------------------------------- Kaplan


def kaplan_A(f: Field, ep: EigenPair, p: Params | None = None) -> float:
    """A = int phi u. v-fields need ``p`` to be shifted back to u."""
    if f.grid != ep.phi.grid:
        raise ValueError("field and eigenfunction live on different grids")
    if f.tag == "v":
        if p is None:
            raise ValueError("kaplan_A on a v-field needs the parameters")
        u = f.values + p.u_crit
    else:
        u = f.values
    return f.grid.integrate(ep.phi.values * u)


def _kaplan_rates(p: Params, mu: float) -> tuple[float, float]:
    """(kappa, beta) = (c - mu a, mu b - d)."""
    return p.c - mu * p.a, mu * p.b - p.d


def kaplan_threshold(p: Params, mu: float) -> float:
    kappa, beta = _kaplan_rates(p, mu)
    if not beta > 0:
        raise ValueError(f"need mu b > d, got mu b - d = {beta:.6g}")
    return max(-kappa, 0.0) / beta


def kaplan_tstar(p: Params, mu: float, A0: float) -> float:
    """Upper bound on the blow-up time from dA/dt >= kappa A + beta A^2.

    Solving the Riccati bound for Xi = exp(-kappa t) A gives
    1/Xi(t) <= 1/A0 - (beta/kappa)(exp(kappa t) - 1), which vanishes at
    t* = log(1 + kappa/(beta A0)) / kappa for either sign of kappa (when
    kappa < 0 the argument stays positive because A0 > -kappa/beta). At
    kappa = 0 the limit 1/(beta A0) is returned.
    """
    thr = kaplan_threshold(p, mu)
    if not A0 > thr:
        raise ValueError(f"A0 = {A0:.6g} does not exceed the threshold {thr:.6g}")
    kappa, beta = _kaplan_rates(p, mu)
    x = kappa / (beta * A0)
    if x == 0.0:
        return 1.0 / (beta * A0)
    return math.log1p(x) / kappa


@dataclass
class KaplanSeries:
    times: np.ndarray
    A: np.ndarray
    Xi: np.ndarray
    deficit: np.ndarray
    tau_err: float

    @property
    def xi_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.Xi) >= 0.0))


def kaplan_series(result: RunResult, ep: EigenPair, p: Params) -> KaplanSeries:
    """A(t), Xi(t) = exp(-kappa t) A(t), and the slack of the ODE inequality.

    ``deficit[k]`` is kappa A_k + beta A_k^2 - (A_{k+1} - A_k)/(t_{k+1} - t_k);
    tau_err is the largest positive deficit (0 when the discrete inequality
    holds at every snapshot).
    """
    kappa, beta = _kaplan_rates(p, ep.mu)
    t = result.times
    A = np.array([kaplan_A(f, ep, p) for _, f in result.trajectory])
    Xi = np.exp(-kappa * t) * A
    if len(t) > 1:
        slope = np.diff(A) / np.diff(t)
        deficit = kappa * A[:-1] + beta * A[:-1] ** 2 - slope
    else:
        deficit = np.zeros(0)
    tau = max(0.0, float(np.max(deficit))) if deficit.size else 0.0
    return KaplanSeries(t, A, Xi, deficit, tau)


# ---------------------------------------------------------------- concavity


def default_reaction_h(p: Params) -> Callable:
    """h(s) = (c - d a/(2b) - d s)(s + a/(2b)), the reaction in the v-variable."""
    k = p.u_crit

    def h(s):
        return (p.c - p.d * k - p.d * s) * (s + k)

    return h


@dataclass
class ConcavityConfig:
    """Setup for the concavity functional Psi(t) = int_0^t int v^(m+1).

    ``h`` defaults to the v-form reaction of ``params``; ``alpha`` defaults
    to (m - 1)/(2(m + 1)), the midpoint of its admissible range.
    """

    m: float = 2.0
    h: Callable | None = None
    alpha: float | None = None
    t0: float | None = None
    params: Params | None = None
    default_h: bool = field(default=False, init=False)

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError(f"need m > 1, got {self.m}")
        if self.alpha is None:
            self.alpha = (self.m - 1.0) / (2.0 * (self.m + 1.0))
        if not 0 < self.alpha < (self.m - 1.0) / (self.m + 1.0):
            raise ValueError(f"alpha must lie in (0, (m-1)/(m+1)), got {self.alpha}")
        if self.h is None:
            if self.params is None:
                raise ValueError("give either a reaction h or the params for the default one")
            self.h = default_reaction_h(self.params)
            self.default_h = True


def concavity_H(s: float, cfg: ConcavityConfig) -> float:
    """H(s) = int_0^s m t^(m-1) h(t) dt by adaptive quadrature."""
    if s < 0:
        raise ValueError("H is defined for s >= 0")
    if s == 0:
        return 0.0
    val, _ = integrate.quad(lambda t: cfg.m * t ** (cfg.m - 1.0) * cfg.h(t), 0.0, s,
                            epsabs=1e-10, epsrel=1e-10, limit=200)
    return float(val)


def concavity_H_closed(s, p: Params, m: float = 2.0):
    """Closed form of H for the default quadratic h (polynomial in s)."""
    k = p.u_crit
    s = np.asarray(s, dtype=float)
    c2, c1, c0 = -p.d, p.c - 2.0 * p.d * k, k * (p.c - p.d * k)
    return m * (c2 * s ** (m + 2) / (m + 2) + c1 * s ** (m + 1) / (m + 1) + c0 * s**m / m)


def _H_on_values(values: np.ndarray, cfg: ConcavityConfig) -> np.ndarray:
    """H at every entry of ``values`` (>= 0).

    The default h has a polynomial H; any other h is integrated
    cumulatively over the sorted values.
    """
    if cfg.default_h:
        return concavity_H_closed(values, cfg.params, cfg.m)
    flat = np.asarray(values, dtype=float).ravel()
    order = np.argsort(flat)
    out = np.empty_like(flat)
    acc, prev = 0.0, 0.0
    f = lambda t: cfg.m * t ** (cfg.m - 1.0) * cfg.h(t)
    for i in order:
        s = flat[i]
        if s > prev:
            acc += integrate.quad(f, prev, s, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
            prev = s
        out[i] = acc
    return out.reshape(np.shape(values))


@dataclass
class GGReport:
    s: np.ndarray
    values: np.ndarray
    min_value: float
    first_violation: float | None
    violations: int

    @property
    def holds(self) -> bool:
        return self.violations == 0


def check_gG(cfg: ConcavityConfig, s_max: float, samples: int = 2000,
             rtol: float = 1e-8) -> GGReport:
    """Sample s^m h(s) - 2 H(s) on {0} plus a log-spaced grid up to s_max.

    A sample counts as a violation when it is below -rtol times the size of
    the two terms, which keeps quadrature round-off from being reported.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    s = np.concatenate(([0.0], np.geomspace(s_max * 1e-6, s_max, samples - 1)))
    H = _H_on_values(s, cfg)
    lhs = s**cfg.m * np.array([cfg.h(x) for x in s], dtype=float)
    vals = lhs - 2.0 * H
    scale = np.maximum(np.abs(lhs), np.abs(2.0 * H))
    bad = vals < -rtol * scale
    first = float(s[np.argmax(bad)]) if bad.any() else None
    return GGReport(s, vals, float(np.min(vals)), first, int(bad.sum()))


def _energy(v: np.ndarray, grid, cfg: ConcavityConfig, p: Params) -> float:
    return 0.5 * p.b * dirichlet_energy(v**cfg.m, grid) + grid.integrate(_H_on_values(v, cfg))


def energy_E(f: Field, cfg: ConcavityConfig, p: Params) -> float:
    """E = (b/2) int |grad v^m|^2 + int H(v), gradients on cell faces."""
    v = _v_values(f, p)
    if float(np.min(v)) < 0:
        raise ValueError("the concavity energy needs v >= 0")
    return _energy(v, f.grid, cfg, p)


@dataclass
class ConcavitySeries:
    times: np.ndarray
    psi: np.ndarray
    psi_prime: np.ndarray
    energy: np.ndarray
    psi_second: np.ndarray
    concavity_margin: np.ndarray
    alpha: float
    onset_t0: float | None
    tstar_bound: float | None

    @property
    def initial_energy_positive(self) -> bool:
        return bool(self.energy[0] > 0)


def _second_differences(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    if len(t) < 3:
        return np.zeros(0)
    d1 = np.diff(y) / np.diff(t)
    return 2.0 * np.diff(d1) / (t[2:] - t[:-2])


def concavity_series(result: RunResult, cfg: ConcavityConfig, p: Params,
                     negative_tol: float = 0.0) -> ConcavitySeries:
    """Psi, Psi', E and the concavity margin along a trajectory with v >= 0.

    Psi is the trapezoid-in-time integral of int v^(m+1). The onset t0 is
    the first snapshot where [1 - sqrt((m+1)(alpha+1)/(2m))] Psi'(t) >=
    Psi'(0); from there the blow-up time is bounded by
    (Psi(t0) + alpha t0 Psi'(t0)) / (alpha Psi'(t0)).
    """
    m = cfg.m
    times = result.times
    vs = [_v_values(f, p) for _, f in result.trajectory]
    for t, v in zip(times, vs):
        if float(np.min(v)) < -negative_tol:
            raise ValueError(f"snapshot at t={t:g} has v < 0 (min {np.min(v):.3e})")
    vs = [np.maximum(v, 0.0) for v in vs]
    grid = result.trajectory[0][1].grid
    dpsi = np.array([grid.integrate(v ** (m + 1)) for v in vs])
    psi = np.concatenate(([0.0], np.cumsum(0.5 * (dpsi[1:] + dpsi[:-1]) * np.diff(times))))
    energy = np.array([_energy(v, grid, cfg, p) for v in vs])
    d2 = _second_differences(times, psi)
    margin = psi[1:-1] * d2 - (cfg.alpha + 1.0) * dpsi[1:-1] ** 2 if d2.size else np.zeros(0)

    factor = 1.0 - math.sqrt((m + 1.0) * (cfg.alpha + 1.0) / (2.0 * m))
    onset = None
    bound = None
    if dpsi[0] > 0:
        hit = np.nonzero(factor * dpsi >= dpsi[0])[0]
        if hit.size:
            k = int(hit[0])
            onset = float(times[k])
            bound = (psi[k] + cfg.alpha * times[k] * dpsi[k]) / (cfg.alpha * dpsi[k])
    return ConcavitySeries(times, psi, dpsi, energy, d2, margin, cfg.alpha, onset, bound)


# ---------------------------------------------------------------- series


SERIES_COLUMNS = ("t", "mass", "entropy", "dissipation", "margin", "A", "psi", "energyE")


@dataclass
class DiagnosticsSeries:
    times: np.ndarray
    mass: np.ndarray
    entropy: np.ndarray
    entropy_dissipation: np.ndarray
    parabolicity_margin: np.ndarray
    kaplanA: np.ndarray
    psi: np.ndarray
    energyE: np.ndarray
    events: list[Event] = field(default_factory=list)

    def rows(self):
        cols = (self.mass, self.entropy, self.entropy_dissipation, self.parabolicity_margin,
                self.kaplanA, self.psi, self.energyE)
        for k, t in enumerate(self.times):
            yield (float(t),) + tuple(float(c[k]) for c in cols)

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in self.rows():
            w.writerow(["%.17g" % x for x in row])
        return buf.getvalue()


def _or_nan(fn, *args) -> float:
    try:
        return fn(*args)
    except ValueError:
        return math.nan


def compute_series(result: RunResult, p: Params, ep: EigenPair | None = None,
                   concavity: ConcavityConfig | None = None) -> DiagnosticsSeries:
    """Every functional at every snapshot; NaN where a functional does not apply.

    Entropy and dissipation need u >= 0, A needs an eigenpair on the same
    grid, and Psi/E need v >= 0 throughout.
    """
    traj = result.trajectory
    n = len(traj)
    times = result.times
    ufields = [f if f.tag == "u" else f.with_values(f.values + p.u_crit) for _, f in traj]
    ufields = [Field(f.values, f.grid, f.bc, "u") for f in ufields]
    ms = np.array([mass(f) for f in ufields])
    ent = np.array([_or_nan(entropy, f, p) for f in ufields])
    dis = np.array([_or_nan(entropy_dissipation, f, p) for f in ufields])
    mar = np.array([parabolicity_margin(f, p) for f in ufields])
    if ep is not None:
        A = np.array([_or_nan(kaplan_A, f, ep) for f in ufields])
    else:
        A = np.full(n, math.nan)
    psi = np.full(n, math.nan)
    en = np.full(n, math.nan)
    if concavity is not None:
        try:
            cs = concavity_series(result, concavity, p)
            psi, en = cs.psi, cs.energy
        except ValueError:
            pass
    return DiagnosticsSeries(times, ms, ent, dis, mar, A, psi, en, list(result.events))
