"""Command-line front end: simulate | verify-exact | regimes | particles | sweep.

Exit codes: 0 success, 1 invalid configuration or inadmissible input,
2 runtime failure or a breakdown event under the halt policy.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as conf
from .core import Field, Grid, from_v, to_v
from .diagnostics import SERIES_COLUMNS, ConcavityConfig, compute_series, kaplan_A
from .eigen import dirichlet_first_analytic, dirichlet_first_numeric, neumann_spectrum_analytic
from .exact import (multibump_on_grid, residual_check, residual_scale, support_radius,
                    validate_multibump)
from .output import header_block, snapshot_columns, snapshot_rows, write_csv, write_json
from .pde import SolverConfig, run, run_v_form
from .particles import ParticleConfig, compare_to_pde, sample_initial, simulate as simulate_particles
from .regimes import (classify_concavity, classify_global, classify_kaplan, linear_stability,
                      pohozaev_nonexistence)

log = logging.getLogger("aggdiff")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Out:
    """Output paths and the shared header for one command."""

    def __init__(self, spec: conf.RunSpec, command: str):
        self.dir = Path(spec["output"]["dir"])
        self.prefix = spec["output"]["prefix"]
        self.header = header_block(spec.header_lines(), command)
        self.spec = spec.to_dict()
        self.written: list[Path] = []

    def path(self, suffix: str) -> Path:
        p = self.dir / f"{self.prefix}_{suffix}"
        self.written.append(p)
        return p

    def csv(self, suffix, columns, rows):
        write_csv(self.path(suffix), self.header, columns, rows)

    def json(self, suffix, payload):
        write_json(self.path(suffix), self.spec, payload)


def _solver_config(spec: conf.RunSpec, t_end: float | None = None) -> SolverConfig:
    s = spec["solver"]
    return SolverConfig(t_end=s["t_end"] if t_end is None else t_end, model=s["model"],
                        epsilon=s["epsilon"], dt=s["dt"], sigma=s["sigma"],
                        breakdown_policy=s["breakdown_policy"], output_stride=s["output_stride"])


def _events(result):
    return [{"t": e.t, "kind": e.kind, "detail": e.detail} for e in result.events]


# ---------------------------------------------------------------- simulate


def cmd_simulate(spec: conf.RunSpec) -> int:
    p = conf.params(spec)
    f0 = conf.initial_field(spec, p)
    cfg = _solver_config(spec)
    form = spec["solver"]["form"]
    if form == "v":
        f0 = f0 if f0.tag == "v" else to_v(f0, p)
        result = run_v_form(f0, p, cfg)
    else:
        f0 = f0 if f0.tag == "u" else from_v(f0, p)
        result = run(f0, p, cfg)

    ep = None
    if spec["diagnostics"]["kaplan"] and not f0.grid.is_radial and f0.bc.value == "dirichlet":
        ep = dirichlet_first_numeric(f0.grid)
    conc = ConcavityConfig(m=spec["diagnostics"]["m"], params=p) if spec["diagnostics"]["concavity"] else None
    series = compute_series(result, p, ep, conc)

    out = _Out(spec, "simulate")
    out.csv("snapshots.csv", snapshot_columns(result.final), snapshot_rows(result.trajectory))
    out.csv("series.csv", SERIES_COLUMNS, series.rows())
    halted = not result.completed
    out.json("run.json", {"events": _events(result), "trusted": result.trusted,
                          "steps": result.steps, "t_final": float(result.times[-1]),
                          "completed": result.completed,
                          "mu": ep.mu if ep is not None else None})
    print(f"steps={result.steps} t={result.times[-1]:.6g} events={','.join(result.event_kinds())}"
          f" trusted={str(result.trusted).lower()}")
    if halted:
        print(f"run halted: {result.events[-1].kind if result.events else 'max steps'}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------- verify-exact


def _grid_points(grd: Grid):
    return grd.axis_coords[0] if grd.axes == 1 else np.stack(grd.coords, axis=-1)


def _bump_distance(grd: Grid, bump) -> np.ndarray:
    pts = _grid_points(grd)
    if grd.is_radial or grd.axes == 1:
        return np.abs(pts - bump.x0[0])
    return np.sqrt(np.sum((pts - np.asarray(bump.x0)) ** 2, axis=-1))


def solver_error_table(cfg, p, base: Grid, cells_list, t: float):
    """Local v-form solver against the exact superposition at time t.

    Returns rows (cells, h, relative L1 error, max error on the inner half
    of every support).
    """
    rows = []
    for cells in cells_list:
        grd = Grid(base.geometry, base.lengths, (cells,) * base.axes, base.origin, base.radial_dim)
        v0 = Field(multibump_on_grid(cfg, grd, 0.0, p), grd, "neumann", "v")
        res = run_v_form(v0, p, SolverConfig(t_end=t, output_stride=10**9))
        exact = multibump_on_grid(cfg, grd, t, p)
        err = res.final.values - exact
        rel = grd.integrate(np.abs(err)) / grd.integrate(np.abs(exact))
        inner = np.zeros(grd.shape, dtype=bool)
        for bp in cfg.bumps:
            inner |= _bump_distance(grd, bp) <= 0.5 * support_radius(bp, t, p)
        rows.append((cells, grd.h, rel, float(np.max(np.abs(err[inner])))))
    return rows


def cmd_verify_exact(spec: conf.RunSpec) -> int:
    p = conf.params(spec)
    ex = spec["exact"]
    if not ex["bumps"]:
        print("[exact] bumps is empty", file=sys.stderr)
        return EXIT_INVALID
    cfg = conf.bump_config(ex["bumps"], ex["tau"])
    times = sorted(ex["times"])
    t_max = ex["t_max"] if ex["t_max"] is not None else max(times + [0.0])
    rep = validate_multibump(cfg, p, t_max=t_max)
    out = _Out(spec, "verify-exact")
    out.csv("conditions.csv", ["condition", "bumps", "lhs", "rhs", "ok", "note"],
            [(c.name, " ".join(map(str, c.bumps)), c.lhs, c.rhs, c.ok, c.note) for c in rep.checks])
    if not rep.valid:
        for c in rep.failures:
            print(f"violated: {c.name} bumps={c.bumps} lhs={c.lhs:.12g} rhs={c.rhs:.12g} ({c.note})",
                  file=sys.stderr)
        return EXIT_INVALID
    bad = [t for t in times if t >= cfg.tau]
    if bad:
        print(f"times {bad} lie outside [0, tau={cfg.tau:g})", file=sys.stderr)
        return EXIT_INVALID

    grd = conf.grid(spec)
    snaps = [(t, Field(multibump_on_grid(cfg, grd, t, p), grd, "neumann", "v")) for t in times]
    out.csv("slices.csv", snapshot_columns(snaps[0][1]), snapshot_rows(snaps))

    rows = []
    dt = ex["residual_dt"]
    for t in times:
        te = max(t, dt)
        if te + dt >= cfg.tau:
            continue
        r = residual_check(cfg, grd, te, p, dt=dt)
        bound = 5.0 * grd.h**2 * residual_scale(cfg, te, p)
        rows.append((te, grd.h, r, bound, r <= bound))
    out.csv("residual.csv", ["t", "h", "residual", "bound", "ok"], rows)
    summary = {"valid": True, "tau": cfg.tau, "residuals": rows}

    if ex["solver_cells"]:
        if p.c != 0 or p.d != 0:
            print("solver comparison needs c = d = 0", file=sys.stderr)
            return EXIT_INVALID
        err_rows = solver_error_table(cfg, p, grd, ex["solver_cells"], ex["solver_t"])
        out.csv("solver_error.csv", ["cells", "h", "rel_l1_error", "inner_max_error"], err_rows)
        summary["solver_error"] = err_rows
    out.json("exact.json", summary)
    for t, h, r, bound, ok in rows:
        print(f"t={t:.6g} residual={r:.3e} bound={bound:.3e} {'ok' if ok else 'EXCEEDED'}")
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_RUNTIME


# ---------------------------------------------------------------- regimes


def cmd_regimes(spec: conf.RunSpec) -> int:
    p = conf.params(spec)
    rg = spec["regimes"]
    grd = conf.grid(spec)
    f0 = conf.initial_field(spec, p, grd)
    u0 = f0 if f0.tag == "u" else from_v(f0, p)
    reports = {}

    u0_max = rg["u0_max"] if rg["u0_max"] is not None else u0.max_value()
    reports["global"] = classify_global(p, u0_max).to_dict()

    notes = []
    mu = rg["mu"]
    if mu is None and not grd.is_radial:
        mu = conf.default_mu(grd)
    if mu is not None and not math.isnan(mu):
        if rg["A0"] is not None:
            A0 = rg["A0"]
        elif not grd.is_radial:
            A0 = kaplan_A(u0, dirichlet_first_analytic(grd))
        else:
            A0 = None
        if A0 is not None:
            reports["kaplan"] = classify_kaplan(p, mu, A0).to_dict()
    else:
        notes.append("eigenfunction criterion skipped: no eigenvalue for this geometry")

    reports["concavity"] = classify_concavity(p, to_v(u0, p), rg["m"]).to_dict()

    if p.n > 2:
        reports["nonexistence"] = pohozaev_nonexistence(p, rg["star_shaped"]).to_dict()
    else:
        notes.append("non-existence criterion needs n > 2")

    if p.c > 0 and p.d > 0 and not grd.is_radial:
        spec_k = neumann_spectrum_analytic(grd, rg["modes"])
        st = linear_stability(p, spec_k).to_dict()
        st["lambdas"] = [float(x) for x in spec_k.lambdas]
        reports["linear_stability"] = st
    else:
        notes.append("linear stability needs c > 0, d > 0 and a Cartesian grid")

    out = _Out(spec, "regimes")
    out.json("regimes.json", {"reports": reports, "notes": notes})
    for key, rep in reports.items():
        print(f"{key}: {rep['verdict']}")
        for e in rep.get("entries", []):
            print(f"  {e['name']}: lhs={e['lhs']} {e['relation']} rhs={e['rhs']} -> {e['verdict']}")
    for n in notes:
        print(f"note: {n}")
    return EXIT_OK


# ---------------------------------------------------------------- particles


def run_to_times(f0: Field, p, cfg: SolverConfig, times) -> list[tuple[float, Field]]:
    """PDE snapshots at exactly the requested times (runs segment by segment)."""
    snaps = []
    f, t_prev = f0, 0.0
    for t in sorted(times):
        if t > t_prev:
            seg = SolverConfig(t_end=t - t_prev, model=cfg.model, epsilon=cfg.epsilon, dt=cfg.dt,
                               sigma=cfg.sigma, output_stride=10**9)
            res = run(f, p, seg)
            if not res.completed:
                raise RuntimeError(f"PDE run stopped early: {res.event_kinds()}")
            f, t_prev = res.final, t
        snaps.append((t, f))
    return snaps


def cmd_particles(spec: conf.RunSpec) -> int:
    p = conf.params(spec)
    pc = spec["particles"]
    if p.c != 0 or p.d != 0:
        print("the particle system models c = d = 0 only", file=sys.stderr)
        return EXIT_INVALID
    grd = conf.grid(spec)
    f0 = conf.initial_field(spec, p, grd)
    f0 = f0 if f0.tag == "u" else from_v(f0, p)
    M = grd.integrate(f0.values)
    box = None
    if pc["domain"] == "box":
        box = tuple((o, o + L) for o, L in zip(grd.origin, grd.lengths))
    cfg = ParticleConfig(N=pc["N"], epsilon=pc["epsilon"], dt=pc["dt"], t_end=pc["t_end"],
                         total_mass=M, domain=pc["domain"], box=box)
    times = sorted(set(pc["times"]) | {pc["t_end"]})
    seeds = list(range(pc["seed"], pc["seed"] + pc["seeds"]))
    runs = {s: simulate_particles(sample_initial(f0, cfg.N, s), cfg, p, times) for s in seeds}

    out = _Out(spec, "particles")
    first = runs[seeds[0]]
    dim = first[0].dim
    coord = ["x", "y"][:dim]
    out.csv("particles.csv", ["t", "id"] + coord,
            ((st.t, i) + tuple(st.positions[i]) for st in first for i in range(st.N)))
    out.csv("stats.csv", ["t", "seed"] + [f"mean_{c}" for c in coord] + [f"var_{c}" for c in coord],
            ((st.t, s) + tuple(st.positions.mean(axis=0)) + tuple(st.positions.var(axis=0))
             for s in seeds for st in runs[s]))
    summary = {"total_mass": M, "seeds": seeds}
    if pc["compare"]:
        pde_cfg = SolverConfig(t_end=pc["t_end"], model="nonlocal", epsilon=pc["epsilon"])
        snaps = run_to_times(Field(f0.values, grd, "neumann", "u"), p, pde_cfg, times)
        per_seed = [compare_to_pde(runs[s], snaps, times, M, pc["bandwidth"]).l1_error
                    for s in seeds]
        mean = np.mean(per_seed, axis=0)
        out.csv("comparison.csv", ["t", "l1_error"], zip(times, mean))
        summary["l1_error"] = {"times": times, "mean": mean, "per_seed": per_seed}
        for t, e in zip(times, mean):
            print(f"t={t:.6g} l1_error={e:.6g} relative={e / M:.6g}")
    out.json("particles.json", summary)
    return EXIT_OK


# ---------------------------------------------------------------- sweep


COMMANDS = {"simulate": cmd_simulate, "verify-exact": cmd_verify_exact,
            "regimes": cmd_regimes, "particles": cmd_particles}


def _sweep_job(args) -> int:
    command, text, overrides = args
    try:
        spec = conf.resolve(text, overrides)
        return COMMANDS[command](spec)
    except (conf.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def sweep(command: str, text: str, overrides: dict, vary: list[str], jobs: int = 1) -> int:
    """Run ``command`` over the Cartesian product of the ``vary`` lists.

    Each point writes into its own subdirectory sweep_NNN of the output dir.
    """
    axes = []
    for item in vary:
        if "=" not in item:
            raise conf.ConfigError(f"--vary {item!r} must look like section.key=v1,v2")
        key, vals = item.split("=", 1)
        sec, k = key.split(".", 1)
        axes.append([(sec, k, v.strip()) for v in vals.split(",")])
    base = conf.resolve(text, overrides)
    root = Path(base["output"]["dir"])
    points = list(itertools.product(*axes)) if axes else [()]
    tasks = []
    for i, combo in enumerate(points):
        ov = {s: dict(kv) for s, kv in overrides.items()}
        for sec, k, v in combo:
            ov.setdefault(sec, {})[k] = v
        ov.setdefault("output", {})["dir"] = str(root / f"sweep_{i:03d}")
        tasks.append((command, text, ov))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            codes = list(ex.map(_sweep_job, tasks))
    else:
        codes = [_sweep_job(t) for t in tasks]
    index_header = header_block(base.header_lines(), f"sweep {command}")
    write_csv(root / "sweep_index.csv", index_header, ["index", "settings", "exit_code"],
              [(i, " ".join(f"{s}.{k}={v}" for s, k, v in combo), c)
               for i, (combo, c) in enumerate(zip(points, codes))])
    return max(codes) if codes else EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aggdiff",
                                 description="Aggregation-reaction-diffusion numerical lab")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", nargs="?", help="INI configuration file (defaults if omitted)")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one configuration value")
        sp.add_argument("--out", help="output directory (same as --set output.dir=...)")
        sp.add_argument("-v", "--verbose", action="store_true")

    for name in COMMANDS:
        common(sub.add_parser(name))
    sw = sub.add_parser("sweep", help="run a command over a grid of settings")
    common(sw)
    sw.add_argument("--command", dest="sweep_command", choices=sorted(COMMANDS),
                    default="simulate")
    sw.add_argument("--vary", action="append", default=[], metavar="SECTION.KEY=V1,V2,...")
    sw.add_argument("--jobs", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = Path(args.config).read_text() if args.config else ""
        overrides = conf.parse_overrides(args.overrides)
        if args.out:
            overrides.setdefault("output", {})["dir"] = args.out
        if args.command == "sweep":
            return sweep(args.sweep_command, text, overrides, args.vary, args.jobs)
        spec = conf.resolve(text, overrides)
        return COMMANDS[args.command](spec)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (conf.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
