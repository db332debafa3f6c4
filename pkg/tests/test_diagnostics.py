import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from aggdiff.core import BoundaryKind, Field, Grid, Params
from aggdiff.diagnostics import (SERIES_COLUMNS, ConcavityConfig, check_gG, compute_series, concavity_H,
                                 concavity_H_closed, concavity_series, energy_E, entropy,
                                 entropy_dissipation, kaplan_A, kaplan_series, kaplan_threshold,
                                 kaplan_tstar, mass, parabolicity_margin)
from aggdiff.eigen import dirichlet_first_analytic, dirichlet_first_numeric
from aggdiff.pde import Event, RunResult, SolverConfig, _forms, _local_rate, run

G = Grid.interval(1.0, 100)


def const(val, grid=G, tag="u", bc=BoundaryKind.NEUMANN):
    return Field(np.full(grid.shape, val), grid, bc, tag)


def frozen(fields, times):
    return RunResult(list(zip(times, fields)), [Event(times[-1], "completed")])


def test_mass_examples():
    assert mass(const(1.0)) == pytest.approx(1.0, abs=1e-14)
    x = G.axis_coords[0]
    f = Field(np.sin(3 * x) + 1, G)
    assert mass(f.with_values(2 * f.values)) == 2 * mass(f)


def test_entropy_examples():
    assert entropy(const(1.0), Params(a=2.0, b=1.0)) == pytest.approx(-3.0, abs=1e-14)
    assert entropy(const(0.0), Params(a=2.0, b=1.0)) == 0.0
    assert entropy(const(1.0), Params(a=1.0, b=0.5)) == pytest.approx(-1.5, abs=1e-14)
    with pytest.raises(ValueError):
        entropy(const(-1e-6), Params(a=1.0, b=1.0))
    # v-fields are shifted back to u
    p = Params(a=2.0, b=1.0)
    assert entropy(const(0.0, tag="v"), p) == pytest.approx(entropy(const(1.0), p))


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 3.0), min_size=11, max_size=11), st.floats(0.1, 5), st.floats(0.1, 5))
def test_dissipation_nonpositive(vals, a, b):
    g = Grid.interval(1.0, 10)
    assert entropy_dissipation(Field(np.array(vals), g), Params(a=a, b=b)) <= 0.0


def test_dissipation_constant_zero():
    assert entropy_dissipation(const(0.3), Params(1.0, 1.0)) == 0.0


def test_dissipation_matches_entropy_rate():
    # chain-rule oracle: dE/dt along the semidiscrete flow equals the dissipation up to O(h^2)
    p = Params(a=1.0, b=1.0)
    ratios = []
    for cells in (100, 200):
        g = Grid.interval(1.0, cells)
        u = 0.2 + 0.1 * np.cos(math.pi * g.axis_coords[0])
        f = Field(u, g)
        flux, reaction, pinned, _ = _forms(p, "u")
        rate = _local_rate(u, g, f.bc, flux, reaction, pinned)
        dE = g.integrate((p.a * np.log(u) - 2 * p.b * u) * rate)
        ratios.append(abs(dE / entropy_dissipation(f, p) - 1))
    assert ratios[0] < 1e-3 and ratios[1] < ratios[0] / 3


def test_margin_examples():
    p = Params(a=2.0, b=1.0)
    assert parabolicity_margin(const(0.0), p) == 2.0
    assert parabolicity_margin(const(1.0), p) == 0.0
    assert parabolicity_margin(const(1.0 - 0.1), p) == pytest.approx(2 * 1.0 * 0.1)


def test_kaplan_A_examples():
    g = Grid.interval(1.0, 400)
    ep = dirichlet_first_numeric(g)
    assert kaplan_A(const(2.5, g), ep) == pytest.approx(2.5, rel=1e-12)
    ea = dirichlet_first_analytic(g)
    # int_0^1 ((pi/2) sin(pi x))^2 dx = pi^2 / 8
    assert kaplan_A(ea.phi, ea) == pytest.approx(math.pi**2 / 8, rel=1e-5)
    with pytest.raises(ValueError):
        kaplan_A(const(1.0, Grid.interval(1.0, 50)), ep)
    with pytest.raises(ValueError):
        kaplan_A(const(0.0, g, tag="v"), ep)


@given(st.lists(st.floats(0.0, 10.0), min_size=21, max_size=21))
def test_kaplan_A_nonnegative(vals):
    g = Grid.interval(1.0, 20)
    assert kaplan_A(Field(np.array(vals), g), dirichlet_first_analytic(g)) >= 0.0


def test_kaplan_threshold_examples():
    assert kaplan_threshold(Params(1, 1), math.pi**2) == pytest.approx(1.0, rel=1e-15)
    assert kaplan_threshold(Params(1, 1, c=20.0), math.pi**2) == 0.0
    assert kaplan_threshold(Params(a=1, b=2, c=2, d=1), 1.0) == 0.0
    with pytest.raises(ValueError):
        kaplan_threshold(Params(a=1, b=1, d=2.0), 1.0)


def test_kaplan_tstar_examples():
    p = Params(a=1, b=2, c=2, d=1)
    assert abs(kaplan_tstar(p, 1.0, 1.0) - math.log(2)) <= 1e-12
    ts = [kaplan_tstar(p, 1.0, A0) for A0 in (1, 10, 100, 1e4, 1e8)]
    assert np.all(np.diff(ts) < 0) and ts[-1] < 1e-7
    with pytest.raises(ValueError):
        kaplan_tstar(Params(1, 1), math.pi**2, 1.0)
    # kappa = 0 limit and continuity around it
    p0 = Params(a=1.0, b=1.0, c=1.0)
    assert kaplan_tstar(p0, 1.0, 2.0) == 0.5
    near = Params(a=1.0, b=1.0, c=1.0 + 1e-9)
    assert kaplan_tstar(near, 1.0, 2.0) == pytest.approx(0.5, rel=1e-8)


@given(st.floats(1.0001, 3.0), st.floats(0.5, 20.0), st.floats(0.1, 5.0))
def test_kaplan_tstar_negative_kappa_matches_root(ratio, mu, b):
    p = Params(a=1.0, b=b)
    kappa, beta = -mu, mu * b
    A0 = ratio * kaplan_threshold(p, mu)
    # root of 1/A0 - (beta/kappa)(exp(kappa t) - 1); it exists since A0 > -kappa/beta
    bound = lambda t: 1 / A0 - (beta / kappa) * (math.exp(kappa * t) - 1)
    hi = 1.0
    while bound(hi) > 0:
        hi *= 2
    root = brentq(bound, 0.0, hi, xtol=1e-14, rtol=1e-14)
    assert kaplan_tstar(p, mu, A0) == pytest.approx(root, rel=1e-9)


def test_kaplan_tstar_large_near_threshold():
    p = Params(1, 1)
    mu = math.pi**2
    assert kaplan_tstar(p, mu, 1.0 + 1e-9) > 1.0
    assert math.isfinite(kaplan_tstar(p, mu, 1.0 + 1e-9))


def test_kaplan_series_on_frozen_data():
    g = Grid.interval(1.0, 50)
    ep = dirichlet_first_analytic(g)
    p = Params(a=1.0, b=1.0, c=0.0, d=0.0)
    times = [0.0, 0.1, 0.2]
    fields = [const(k, g) for k in (1.0, 2.0, 3.0)]
    ks = kaplan_series(frozen(fields, times), ep, p)
    A = ks.A
    kappa, beta = -ep.mu, ep.mu
    assert np.allclose(ks.Xi, np.exp(-kappa * np.array(times)) * A)
    expected = kappa * A[:-1] + beta * A[:-1] ** 2 - np.diff(A) / 0.1
    assert np.allclose(ks.deficit, expected)
    assert ks.tau_err == pytest.approx(max(0.0, expected.max()))
    assert ks.xi_nondecreasing


def test_concavity_config():
    cfg = ConcavityConfig(params=Params(1, 1))
    assert cfg.alpha == pytest.approx(1 / 6) and cfg.default_h
    with pytest.raises(ValueError):
        ConcavityConfig(m=1.0, params=Params(1, 1))
    with pytest.raises(ValueError):
        ConcavityConfig(alpha=1 / 3, params=Params(1, 1))
    with pytest.raises(ValueError):
        ConcavityConfig()


def test_concavity_H_examples():
    assert concavity_H(2.0, ConcavityConfig(h=lambda s: 0.0)) == 0.0
    lin = ConcavityConfig(h=lambda s: s)
    for s in (0.0, 0.5, 2.0):
        assert concavity_H(s, lin) == pytest.approx(2 * s**3 / 3, rel=1e-12, abs=1e-15)
    zero = ConcavityConfig(params=Params(a=1.0, b=1.0))
    assert concavity_H(3.0, zero) == 0.0
    with pytest.raises(ValueError):
        concavity_H(-1.0, lin)


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.0, 10.0),
       st.sampled_from([1.5, 2.0, 3.0]))
def test_H_closed_form_matches_quadrature(a, b, c, d, s, m):
    p = Params(a=a, b=b, c=c, d=d)
    cfg = ConcavityConfig(m=m, params=p)
    q = concavity_H(s, cfg)
    assert float(concavity_H_closed(s, p, m)) == pytest.approx(q, rel=1e-9, abs=1e-9)


def test_H_closed_form_symbolic():
    sympy = pytest.importorskip("sympy")
    s, t, a, b, c, d = sympy.symbols("s t a b c d", positive=True)
    k = a / (2 * b)
    H = sympy.integrate(2 * t * (c - d * k - d * t) * (t + k), (t, 0, s))
    vals = {a: 1.3, b: 0.7, c: 0.4, d: 0.9, s: 2.1}
    p = Params(a=1.3, b=0.7, c=0.4, d=0.9)
    assert float(concavity_H_closed(2.1, p, 2.0)) == pytest.approx(float(H.subs(vals)), rel=1e-13)


def test_check_gG_examples():
    rep = check_gG(ConcavityConfig(h=lambda s: s), 2.0)
    assert not rep.holds and rep.first_violation is not None and rep.first_violation > 0
    assert rep.min_value == pytest.approx(-(2.0**3) / 3, rel=1e-9)
    zero = check_gG(ConcavityConfig(h=lambda s: 0.0), 2.0)
    assert zero.holds and zero.min_value == 0.0
    p = Params(a=2.0, b=1.0, c=1.0, d=1.0)   # c = min(ad/b, ad/2b) = 1
    assert check_gG(ConcavityConfig(params=p), 10.0).holds
    over = Params(a=2.0, b=1.0, c=1.5, d=1.0)
    assert not check_gG(ConcavityConfig(params=over), 10.0).holds
    with pytest.raises(ValueError):
        check_gG(ConcavityConfig(h=lambda s: s), 2.0, samples=1)


@settings(max_examples=40)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.01, 5), st.floats(0.0, 1.0))
def test_gG_holds_below_c_bound(a, b, d, frac):
    # the sampled check agrees with the closed-form condition c <= min(ad/b, ad/(2b))
    c = frac * min(a * d / b, a * d / (2 * b))
    assert check_gG(ConcavityConfig(params=Params(a=a, b=b, c=c, d=d)), 50.0, samples=400).holds


def test_energy_and_series_examples():
    g = Grid.interval(1.0, 50)
    p = Params(a=1.0, b=1.0)
    cfg = ConcavityConfig(h=lambda s: 0.0)
    zero = const(0.0, g, tag="v")
    cs = concavity_series(frozen([zero] * 3, [0.0, 0.5, 1.0]), cfg, p)
    assert np.all(cs.psi == 0) and np.all(cs.energy == 0)
    assert not cs.initial_energy_positive and cs.tstar_bound is None
    one = const(1.0, g, tag="v")
    times = np.linspace(0, 1, 6)
    cs = concavity_series(frozen([one] * 6, list(times)), cfg, p)
    assert np.allclose(cs.psi, times, atol=1e-14)
    assert np.all(cs.energy == 0)
    with pytest.raises(ValueError):
        concavity_series(frozen([const(-0.1, g, tag="v")], [0.0]), cfg, p)
    with pytest.raises(ValueError):
        energy_E(const(-0.1, g, tag="v"), cfg, p)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=21, max_size=21), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_psi_second_derivative_identity(vals, a, b):
    # semidiscrete identity for m=2 and h=0: d/dt sum w v^3 = 3 sum w v^2 dv/dt = 6 E
    p = Params(a=a, b=b)
    g = Grid.interval(1.0, 20)
    v = np.array(vals)
    flux, reaction, pinned, _ = _forms(p, "v")
    rate = _local_rate(v, g, BoundaryKind.NEUMANN, flux, reaction, pinned)
    lhs = 3 * g.integrate(v**2 * rate)
    E = energy_E(Field(v, g, tag="v"), ConcavityConfig(params=p), p)
    assert lhs == pytest.approx(6 * E, rel=1e-10, abs=1e-10)


def test_concavity_onset_detection():
    # Psi' growing like exp(t) reaches the onset factor in finite time
    g = Grid.interval(1.0, 10)
    p = Params(a=1.0, b=1.0)
    times = np.linspace(0, 3, 31)
    fields = [const(math.exp(t / 3), g, tag="v") for t in times]
    cs = concavity_series(frozen(fields, list(times)), ConcavityConfig(h=lambda s: 0.0), p)
    factor = 1 - math.sqrt(3 * (1 + 1 / 6) / 4)
    k = int(np.argmax(factor * cs.psi_prime >= cs.psi_prime[0]))
    assert cs.onset_t0 == times[k]
    assert cs.tstar_bound == pytest.approx((cs.psi[k] + times[k] / 6 * cs.psi_prime[k]) / (cs.psi_prime[k] / 6))


def test_compute_series():
    g = Grid.interval(1.0, 50)
    p = Params(a=1.0, b=1.0)
    u0 = Field(0.2 + 0.1 * np.cos(math.pi * g.axis_coords[0]), g)
    res = run(u0, p, SolverConfig(t_end=0.01, output_stride=50))
    s = compute_series(res, p)
    assert len(SERIES_COLUMNS) == 8
    assert np.all(np.isnan(s.kaplanA)) and np.all(np.isnan(s.psi))
    assert np.allclose(s.mass, s.mass[0], rtol=1e-13)
    assert np.all(np.diff(s.entropy) <= 1e-10)
    text = s.to_csv("# hdr\n")
    lines = text.splitlines()
    assert lines[0] == "# hdr" and lines[1] == ",".join(SERIES_COLUMNS)
    assert len(lines) == 2 + len(res.trajectory)
