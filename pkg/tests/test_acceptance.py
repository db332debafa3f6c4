"""Acceptance criteria, each run at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""
import math

import numpy as np
import pytest

from aggdiff.core import BoundaryKind, Field, Grid, Params
from aggdiff.diagnostics import (ConcavityConfig, check_gG, concavity_series, entropy,
                                 entropy_dissipation, kaplan_A, kaplan_series, kaplan_threshold,
                                 kaplan_tstar, mass)
from aggdiff.eigen import NeumannSpectrum, dirichlet_first_numeric, neumann_spectrum_analytic
from aggdiff.exact import (BarenblattBump, MultiBumpConfig, multibump_on_grid, residual_check,
                           residual_scale, support_radius, validate_multibump)
from aggdiff.particles import ParticleConfig, compare_to_pde, sample_initial, simulate
from aggdiff.pde import (COMPLETED, SolverConfig, cfl_dt, cfl_dt_nonlocal, clip_step, make_kernel, run,
                         run_v_form, step_local, step_nonlocal)
from aggdiff.regimes import Verdict, linear_stability, pohozaev_nonexistence, pohozaev_quadratic, sampled_q_max



# ---------------------------------------------------------------- 1


def _barenblatt_run(cells_per_unit: int):
    p = Params(a=4.0, b=1.0)
    bump = BarenblattBump("negative", 1.0, (0.0,))
    cfg = MultiBumpConfig([bump])
    g = Grid.interval(10.0, 10 * cells_per_unit, origin=-5.0)
    v0 = Field(multibump_on_grid(cfg, g, 0.0, p), g, tag="v")
    res = run_v_form(v0, p, SolverConfig(t_end=0.5, output_stride=10**9))
    exact = multibump_on_grid(cfg, g, 0.5, p)
    return g, res, exact, support_radius(bump, 0.5, p)


def test_ac1_barenblatt_oracle(criterion):
    g1, r1, e1, R = _barenblatt_run(100)
    g2, r2, e2, _ = _barenblatt_run(200)
    rel = g2.integrate(np.abs(r2.final.values - e2)) / g2.integrate(np.abs(e2))
    # max error on |x| <= R/2, at the nodes the two grids share
    x = g1.axis_coords[0]
    inner = np.abs(x) <= 0.5 * R
    err1 = np.max(np.abs(r1.final.values - e1)[inner])
    err2 = np.max(np.abs(r2.final.values[::2] - e2[::2])[inner])
    order = math.log2(err1 / err2)
    ok = r2.completed and rel <= 0.05 and order >= 1.5
    criterion("AC1 Barenblatt oracle", ok,
              f"rel L1 error {rel:.3e} (<= 5e-2) at h=1/200; order {order:.2f} (>= 1.5) on |x| <= R/2")


# ---------------------------------------------------------------- 2


def _every_step_bounds(f0, p):
    """Step the local scheme exactly as the driver does and track min/max at every step."""
    f, t, umin, umax, steps = f0, 0.0, f0.min_value(), f0.max_value(), 0
    while t < 2.0:
        dt, last = clip_step(t, cfl_dt(f, p, 0.4), 2.0)
        f = step_local(f, p, dt)
        t = 2.0 if last else t + dt
        steps += 1
        umin, umax = min(umin, f.min_value()), max(umax, f.max_value())
    return f, umin, umax, steps


@pytest.mark.parametrize("bc", ["neumann", "dirichlet"])
def test_ac2_invariant_region(criterion, bc):
    p = Params(a=2.0, b=1.0, c=0.5, d=1.0)
    g = Grid.interval(1.0, 100)
    x = g.axis_coords[0]
    u = np.minimum(1.5 * np.exp(-((x - 0.5) ** 2) / (2 * 0.15**2)), 0.9)
    if bc == "dirichlet":
        u[[0, -1]] = 0.0
    f0 = Field(u, g, BoundaryKind(bc))
    eps0 = p.u_crit - 0.9
    res = run(f0, p, SolverConfig(t_end=2.0, output_stride=10**9))
    final, umin, umax, steps = _every_step_bounds(f0, p)
    same = steps == res.steps and np.array_equal(final.values, res.final.values)
    ok = (res.event_kinds() == [COMPLETED] and same and umin >= -1e-8
          and umax <= p.u_crit - eps0 + 1e-8)
    criterion(f"AC2 invariant region ({bc})", ok,
              f"{steps} steps, min u {umin:.3e} >= -1e-8, max u {umax:.12f} <= 0.9 + 1e-8, "
              f"events {res.event_kinds()}")


# ---------------------------------------------------------------- 3


def test_ac3_entropy_dissipation(criterion):
    p = Params(a=1.0, b=1.0)
    g = Grid.interval(1.0, 100)
    u0 = Field(0.2 + 0.1 * np.cos(math.pi * g.axis_coords[0]), g)
    mismatch = {}
    worst_increase = -math.inf
    for dt in (2e-5, 5e-6):
        res = run(u0, p, SolverConfig(t_end=0.05, dt=dt, output_stride=1))
        E = np.array([entropy(f, p) for _, f in res.trajectory])
        D = np.array([entropy_dissipation(f, p) for _, f in res.trajectory])
        dEdt = np.diff(E) / np.diff(res.times)
        mismatch[dt] = float(np.max(np.abs(dEdt / D[:-1] - 1)))
        worst_increase = max(worst_increase, float(np.max(np.diff(E))))
    ok = worst_increase <= 1e-10 and mismatch[5e-6] <= 0.10
    criterion("AC3 entropy dissipation", ok,
              f"max E increase {worst_increase:.2e} (<= 1e-10); |dE/dt / D - 1| = "
              f"{mismatch[2e-5]:.2e} at dt=2e-5, {mismatch[5e-6]:.2e} at dt=5e-6 (<= 0.10)")


# ---------------------------------------------------------------- 4


def _kaplan_run(cells, dt):
    p = Params(a=1.0, b=1.0, c=0.9 * math.pi**2, d=0.0)
    g = Grid.interval(1.0, cells)
    ep = dirichlet_first_numeric(g)
    thr = kaplan_threshold(p, ep.mu)
    u0 = Field(ep.phi.values * (2 * thr / g.integrate(ep.phi.values**2)), g, BoundaryKind.DIRICHLET)
    res = run(u0, p, SolverConfig(t_end=0.25, model="nonlocal", epsilon=0.05, dt=dt, output_stride=1))
    return res, kaplan_series(res, ep, p), kaplan_A(u0, ep) / thr


def test_ac4_kaplan(criterion):
    mu = dirichlet_first_numeric(Grid.interval(1.0, 256)).mu
    mu_ok = abs(mu - math.pi**2) <= 1e-3
    tstar = kaplan_tstar(Params(a=1, b=2, c=2, d=1), 1.0, 1.0)
    formulas_ok = (abs(tstar - math.log(2)) <= 1e-12
                   and kaplan_threshold(Params(1, 1), math.pi**2) == pytest.approx(1.0, rel=1e-15)
                   and kaplan_threshold(Params(a=1, b=2, c=2, d=1), 1.0) == 0.0)
    r1, k1, ratio1 = _kaplan_run(100, 2e-5)
    r2, k2, ratio2 = _kaplan_run(200, 1e-5)
    runs_ok = r1.completed and r2.completed and min(r1.final.min_value(), r2.final.min_value()) >= 0
    xi_ok = k1.xi_nondecreasing and k2.xi_nondecreasing
    shrink_ok = k2.tau_err <= 0.5 * k1.tau_err
    ok = mu_ok and formulas_ok and runs_ok and xi_ok and shrink_ok and abs(ratio1 - 2) < 1e-12
    criterion("AC4 Kaplan machinery", ok,
              f"|mu - pi^2| = {abs(mu - math.pi**2):.2e}; |t* - ln 2| = {abs(tstar - math.log(2)):.1e}; "
              f"A0/threshold = {ratio1:.15g}; Xi nondecreasing {xi_ok}; tau_err {k1.tau_err:.3e} -> "
              f"{k2.tau_err:.3e} (max signed deficit {k1.deficit.max():.3e} -> {k2.deficit.max():.3e})")


# ---------------------------------------------------------------- 5


def test_ac5_concavity(criterion):
    p = Params(a=1.0, b=1.0, c=0.0, d=0.0)
    L = 8.0
    g = Grid.interval(L, 400)
    v0 = 0.1 + 0.2 * (1 + np.cos(math.pi * g.axis_coords[0] / L))
    u0 = Field(v0 + p.u_crit, g)
    res = run(u0, p, SolverConfig(t_end=0.5, model="nonlocal", epsilon=0.1, output_stride=20))
    cfg = ConcavityConfig(m=2.0, params=p)
    cs = concavity_series(res, cfg, p)
    E0 = cs.energy[0]
    e_drop = float(np.min(np.diff(cs.energy))) / E0
    floor = 2 * (cfg.m + 1) * E0
    psi_ratio = float(np.min(cs.psi_second)) / floor
    c_bound = min(p.a * p.d / p.b, p.a * p.d / (2 * p.b))
    gg = check_gG(cfg, 10 * float(v0.max()))
    # a nontrivial reaction at the bound holds, above the bound it is violated
    edge = check_gG(ConcavityConfig(params=Params(a=2.0, b=1.0, c=1.0, d=1.0)), 10 * float(v0.max()))
    over = check_gG(ConcavityConfig(params=Params(a=2.0, b=1.0, c=1.5, d=1.0)), 10 * float(v0.max()))
    ok = (res.completed and p.c <= c_bound and E0 > 0 and e_drop >= -0.01 and psi_ratio >= 0.99
          and gg.holds and edge.holds and not over.holds)
    criterion("AC5 concavity functionals", ok,
              f"E(0) = {E0:.4e} > 0; min dE/E(0) = {e_drop:+.2e} (>= -1e-2); E grows x{cs.energy[-1] / E0:.1f}; "
              f"min Psi''/(6E(0)) = {psi_ratio:.4f} (>= 0.99); gG violations {gg.violations}; "
              f"above-bound violations {over.violations}")


# ---------------------------------------------------------------- 6


@pytest.mark.slow
def test_ac6_mean_field(criterion):
    p = Params(a=0.5, b=0.25)
    g = Grid.interval(6.0, 600, origin=-3.0)
    u0 = Field(0.9 * np.exp(-g.axis_coords[0] ** 2 / (2 * 0.2**2)), g)
    M = mass(u0)
    t = 0.2
    snaps = [(t, run(u0, p, SolverConfig(t_end=t, model="nonlocal", epsilon=0.1,
                                          output_stride=10**9)).final)]
    means = {}
    for N in (500, 2000, 8000):
        cfg = ParticleConfig(N=N, epsilon=0.1, dt=5e-3, t_end=t, total_mass=M)
        errs = []
        for seed in range(5):
            states = simulate(sample_initial(u0, N, seed), cfg, p, [t])
            errs.append(compare_to_pde(states, snaps, [t], M).l1_error[0])
        means[N] = float(np.mean(errs)) / M
    ok = means[2000] <= 0.1 and means[500] > means[2000] > means[8000]
    criterion("AC6 mean-field consistency", ok,
              "mean L1/M over 5 seeds: " + ", ".join(f"N={N}: {v:.4f}" for N, v in means.items())
              + " (N=2000 <= 0.1, decreasing)")


# ---------------------------------------------------------------- 7


def test_ac7_regime_certificates(criterion):
    p = Params(a=1, b=1, c=-1, d=-1, n=3)
    rep = pohozaev_nonexistence(p)
    q = pohozaev_quadratic(p)
    cor = rep.entry("corollary")
    example_ok = (rep.verdict is Verdict.HOLDS and q == (-1.0, 2.0, -1.0)
                  and cor.lhs == 12.0 and cor.rhs == 12.0 and cor.verdict is Verdict.HOLDS)
    stable = linear_stability(Params(a=2, b=1, c=0.5, d=1), neumann_spectrum_analytic(Grid.interval(1.0, 10), 50))
    tie = linear_stability(Params(a=2, b=1, c=1, d=1), neumann_spectrum_analytic(Grid.interval(1.0, 10), 50))
    unstable = linear_stability(Params(1, 1, 1, 1), NeumannSpectrum(np.array([0.0, 2.0])))
    stab_ok = (stable.verdict is Verdict.HOLDS and tie.verdict is Verdict.HOLDS
               and unstable.rates[1] == 1.0 and unstable.verdict is Verdict.FAILS)

    rng = np.random.default_rng(20240601)
    holds = fails = contradictions = 0
    for k in range(1000):
        a, b = rng.uniform(0.1, 5.0, 2)
        # half the tuples with c, d <= 0 so that both verdicts are well represented
        c, d = (-rng.uniform(0, 5, 2)) if k % 2 else rng.uniform(-5, 5, 2)
        pk = Params(a=a, b=b, c=c, d=d, n=int(rng.integers(3, 10)))
        verdict = pohozaev_nonexistence(pk).entry("max_{s>=0} q(s) <= 0").verdict
        qmax, scale = sampled_q_max(pk)
        if verdict is Verdict.HOLDS:
            holds += 1
            contradictions += qmax > 1e-12 * scale
        else:
            fails += 1
    ok = example_ok and stab_ok and contradictions == 0
    criterion("AC7 regime certificates", ok,
              f"q = -(s-1)^2, corollary 12 = 12; stability rate {unstable.rates[1]:g}; "
              f"1000 tuples: {holds} holds / {fails} fails, {contradictions} sampler contradictions")


# ---------------------------------------------------------------- 8


def test_ac8_three_bump_dataset(criterion):
    p = Params(a=4.0, b=1.0, n=1)
    cfg = MultiBumpConfig([BarenblattBump("negative", 1.0, (-7.0,)), BarenblattBump("positive", 1.0, (0.0,)),
                           BarenblattBump("negative", 1.0, (7.0,))])
    rep = validate_multibump(cfg, p)
    g = Grid.interval(24.0, 9600, origin=-12.0)
    times = (0.0, 0.45, 0.9)
    slices = [multibump_on_grid(cfg, g, t, p) for t in times]
    finite = all(np.all(np.isfinite(s)) for s in slices)
    lines, all_ok = [], rep.valid and finite
    for t in times:
        te = max(t, 1e-5)
        r = residual_check(cfg, g, te, p, dt=1e-5)
        bound = 5 * g.h**2 * residual_scale(cfg, te, p)
        all_ok &= r <= bound
        lines.append(f"t={te:g}: {r:.2e} <= {bound:.2e}")
    criterion("AC8 three-bump dataset", all_ok,
              f"valid={rep.valid}; h=1/400; residuals " + "; ".join(lines))


# ---------------------------------------------------------------- 9


@pytest.mark.parametrize("model", ["local", "nonlocal"])
def test_ac9_conservation(criterion, model):
    p = Params(a=1.0, b=1.0)
    g = Grid.interval(1.0, 100)
    f = Field(0.2 + 0.1 * np.cos(math.pi * g.axis_coords[0]) + 0.05 * np.sin(7 * g.axis_coords[0]), g)
    m0 = mass(f)
    if model == "local":
        dt = cfl_dt(f, p)
        step = lambda f: step_local(f, p, dt)
    else:
        k = make_kernel(g, p, 0.1)
        dt = cfl_dt_nonlocal(f, p, k)
        step = lambda f: step_nonlocal(f, p, k, dt)
    for _ in range(10**4):
        f = step(f)
    drift = abs(mass(f) - m0) / m0
    criterion(f"AC9 conservation ({model})", drift <= 1e-12,
              f"relative mass drift after 1e4 steps {drift:.2e} (<= 1e-12)")
