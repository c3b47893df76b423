"""Command-line front end: ``kgeft <subcommand> [options]``.

Exit codes: 0 all monitors pass, 1 a monitor failed, 2 configuration error,
3 runtime error.  KGEFT_WORKERS overrides the worker count and
KGEFT_OUTPUT_ROOT the directory that receives run directories.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from . import __version__
from .config import (
    STREAM_OPNORM,
    STREAM_SAMPLES,
    RunConfig,
    parse_config,
    parse_text,
    serialize,
    write_config,
)
from .eft import (
    EFTConfig,
    LightTrajectory,
    certify_residual,
    jets_from_profile,
    make_eft_data,
    solve_eft,
)
from .errors import KGEFTError, MissingArtifact, ParseError, ValidationError
from .grid import GridSpec, NormSpec, read_fld, write_fld
from .propagators import free_halfwave_norms
from .resonance import (
    CutoffPartition,
    estimate_operator_norm,
    parse_signs,
    phase_u,
    phase_v,
    resonance_sheet,
    sample_support,
    symbol_chiS_over_phi,
    verify_lower_bounds,
    verify_separation,
    verify_symbolic_bounds,
)
from .scattering import SweepResult, run_sweep, uv_eft_state
from .solver import MonitorSpec, UVModel, UVState, default_dt, evolve

EXIT_OK, EXIT_MONITOR, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


@dataclass
class RunManifest:
    """Provenance of one run directory."""

    experiment: str
    config_hash: str
    code_version: str
    started: float
    finished: float = 0.0
    artifacts: list = dc_field(default_factory=list)
    monitors: dict = dc_field(default_factory=dict)
    directory: str = ""
    info: dict = dc_field(default_factory=dict)

    @property
    def passed(self):
        return all(self.monitors.values())

    def add(self, path):
        rel = os.path.relpath(path, self.directory)
        if rel not in self.artifacts:
            self.artifacts.append(rel)
        return path

    def path(self, name):
        for a in self.artifacts:
            if os.path.basename(a) == name or a == name:
                p = os.path.join(self.directory, a)
                if not os.path.exists(p):
                    raise MissingArtifact(f"{a} is listed but missing")
                return p
        raise MissingArtifact(f"{name} is not listed in the manifest")

    def write(self):
        p = os.path.join(self.directory, "manifest.json")
        with open(p, "w") as fh:
            json.dump(_clean(asdict(self)), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p

    @classmethod
    def read(cls, path):
        if os.path.isdir(path):
            path = os.path.join(path, "manifest.json")
        if not os.path.exists(path):
            raise MissingArtifact(f"no manifest at {path}")
        with open(path) as fh:
            d = json.load(fh)
        d["directory"] = os.path.dirname(os.path.abspath(path))
        return cls(**d)


def _clean(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return _clean(x.item())
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def output_root(cfg: RunConfig):
    return os.environ.get("KGEFT_OUTPUT_ROOT", cfg.run.out)


def run_directory(cfg: RunConfig, root=None):
    """Content-addressed directory: <root>/<experiment>-<hash prefix>."""
    root = output_root(cfg) if root is None else root
    return os.path.join(root, f"{cfg.run.experiment}-{cfg.config_hash[:12]}")


# -------------------------------------------------------------- pipelines


def _simulate(cfg: RunConfig, man: RunManifest, opts):
    M = cfg.physics.M
    st, (u0, u1) = uv_eft_state(cfg, M, cfg.physics.order)
    n = cfg.numerics
    dt = n.dt if n.dt is not None else default_dt(cfg.grid_spec, M)
    mon = MonitorSpec(n.N, n.k, n.delta, cfg.physics.E, cfg.monitors.every)
    model = UVModel(cfg.physics.coupling, cfg.physics.mass_term)
    res = evolve(st, n.T, dt, monitors=tuple(cfg.monitors.names) or ("xnorm",), monitor=mon, model=model,
                 profile_every=n.sample_every or None)
    d = man.directory
    man.add(res.trace.write_csv(os.path.join(d, "trace.csv")))
    man.add(write_fld(os.path.join(d, "U0.fld"), st.U, 0.0, "U0", {"M": M}))
    man.add(write_fld(os.path.join(d, "U1.fld"), st.Ut, 0.0, "U1", {"M": M}))
    fin = res.state
    for name, f in (("U_T", fin.U), ("Ut_T", fin.Ut), ("V_T", fin.V), ("Vt_T", fin.Vt)):
        man.add(write_fld(os.path.join(d, f"{name}.fld"), f, fin.t, name, {"M": M}))
    for i, p in enumerate(res.profiles):
        man.add(write_fld(os.path.join(d, f"light_profile_{i:03d}.fld"), p.l_plus, p.time, "l_plus",
                          {"M": M}))
    if "xnorm" in cfg.monitors.names:
        value = res.trace.max_total() * M / cfg.physics.E
        man.monitors["xnorm_bound"] = bool(value <= cfg.monitors.xnorm_bound)
        man.info["max_X_M_over_E"] = value
    man.info["steps"] = res.steps
    man.info["dt"] = dt


def _phase(cfg, M):
    signs = parse_signs(cfg.run.signs)
    return phase_u(M, signs) if cfg.run.phase == "u" else phase_v(M, signs)


def _resonance(cfg: RunConfig, man: RunManifest, opts):
    Ms = list(cfg.run.M_list)
    check = cfg.run.check
    report = {"check": check, "M": Ms, "phase": cfg.run.phase, "signs": cfg.run.signs}
    if check == "separation":
        rep = verify_separation(Ms, [0.0, 1.0, 5.0, 20.0, 100.0, 500.0], parse_signs(cfg.run.signs))
        report.update(slope=rep.fit.slope, stderr=rep.fit.stderr,
                      min_distance={str(k): min(v) for k, v in rep.per_M.items()})
        man.monitors["separation_slope"] = bool(rep.fit.slope >= 0.45)
    elif check == "bounds":
        rng = cfg.rng(STREAM_SAMPLES)
        rows = {}
        for M in Ms:
            part = CutoffPartition(_phase(cfg, M))
            rho = np.concatenate([rng.normal(size=(50, cfg.grid.dim)) * s for s in (0.5, 2.0, M / 4, M, 4 * M)])
            r = verify_lower_bounds(part, rho, rng)
            rows[str(M)] = {"inf_time": r.inf_time, "inf_space": r.inf_space}
        report["bounds"] = rows
        for key in ("inf_time", "inf_space"):
            vals = [v[key] for v in rows.values()]
            man.monitors[f"{key}_stable"] = bool(min(vals) > 0 and max(vals) / min(vals) <= 3.0)
    elif check == "symbols":
        rng = cfg.rng(STREAM_SAMPLES)
        rows = {}
        for M in Ms:
            part = CutoffPartition(_phase(cfg, M))
            rho = rng.normal(size=(2000, cfg.grid.dim)) * rng.choice([1.0, M / 4, M, 4 * M], size=(2000, 1))
            nu1 = sample_support(part, rho, rng, 1)[:, 0, :]
            r = verify_symbolic_bounds(symbol_chiS_over_phi(part), nu1, rho - nu1, 3, M)
            rows[str(M)] = {f"order{a}_nu{k}": v for (a, k), v in r.sup_ratio.items()}
        report["symbols"] = rows
        keys = next(iter(rows.values())).keys()
        man.monitors["symbols_stable"] = all(
            max(r[k] for r in rows.values()) <= 5.0 * min(r[k] for r in rows.values()) for k in keys)
    elif check == "opnorm":
        g = cfg.grid_spec
        rows = {}
        for M in Ms:
            sym = symbol_chiS_over_phi(CutoffPartition(_phase(cfg, M)))
            r = estimate_operator_norm(sym, g, 1.0, 2.0, (4.0, 4.0), (4.0, 4.0), cfg.numerics.a_reg,
                                       cfg.run.trials, cfg.rng(STREAM_OPNORM))
            rows[str(M)] = r.sup_ratio
        from .propagators import fit_power_law

        fit = fit_power_law(Ms, list(rows.values()))
        report.update(opnorm=rows, slope=fit.slope)
        man.monitors["opnorm_trend"] = bool(fit.slope <= 0.1)
    else:
        raise ValidationError("run.check", f"unknown check {check!r}")
    p = os.path.join(man.directory, "report.json")
    with open(p, "w") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    man.add(p)
    man.info["report"] = _clean(report)
    if opts.get("sheets"):
        for path in emit_sheets(man, Ms, opts["sheets"]):
            man.add(path)


def emit_sheets(man, Ms, directory=None):
    directory = directory or man.directory
    os.makedirs(directory, exist_ok=True)
    out = []
    for M in Ms:
        spec = phase_u(M)
        for label, rho in (("small", M / 8.0), ("large", 2.0 * M)):
            rows = resonance_sheet(spec, rho, 2.0 * math.sqrt(M) + 2.0)
            p = os.path.join(directory, f"resonance_sheet_M{M:g}_{label}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["nu_par", "nu_perp", "phi", "grad_phi_norm", "chi_S"])
                for r in rows:
                    w.writerow([repr(float(x)) for x in r])
            out.append(p)
    return out


def _eft_data(cfg: RunConfig, man: RunManifest, opts):
    M = cfg.physics.M
    n = cfg.physics.order
    u0, u1 = cfg.light_data(n)
    ec = EFTConfig(n, cfg.numerics.N, cfg.numerics.k, M, None, cfg.physics.include_u2v, cfg.physics.E,
                   cfg.physics.mass_term)
    b = make_eft_data(u0 * (1.0 / M), u1 * (1.0 / M), ec)
    d = man.directory
    for name in ("U_0", "U_1", "V_0", "V_1"):
        man.add(write_fld(os.path.join(d, f"{name}.fld"), getattr(b, name), 0.0, name, {"M": M, "order": n}))
    for i, f in enumerate(b.P_terms):
        man.add(write_fld(os.path.join(d, f"P_{i:02d}.fld"), f, 0.0, f"P_{i}", {"M": M}))
    man.info["order"] = n
    man.monitors["eft_data"] = True


def _eft_solve(cfg: RunConfig, man: RunManifest, opts):
    M = cfg.physics.M
    n = cfg.physics.order
    T = cfg.numerics.T
    u0, u1 = cfg.light_data(n)
    dt = cfg.numerics.dt if cfg.numerics.dt is not None else 0.25 / M
    steps = max(1, int(round(T / dt)))
    every = cfg.numerics.sample_every or max(1, steps // 64)
    tr = solve_eft(u0, u1, n, M, T, dt, sample_every=every, coupling=cfg.physics.coupling)
    d = man.directory
    for i, (t, p) in enumerate(zip(tr.times, tr.profiles)):
        man.add(write_fld(os.path.join(d, f"profile_{i:04d}.fld"), p, t, "l_plus", {"M": M, "order": n}))
    man.info.update(order=n, samples=len(tr.times), dt=T / steps)
    man.monitors["eft_solve"] = True


def load_trajectory(directory):
    """LightTrajectory from an eft-solve run directory (profiles only)."""
    man = RunManifest.read(directory)
    files = sorted(a for a in man.artifacts if os.path.basename(a).startswith("profile_"))
    if not files:
        raise MissingArtifact(f"no profiles in {directory}")
    traj = None
    for a in files:
        f, hdr = read_fld(os.path.join(man.directory, a))
        if traj is None:
            traj = LightTrajectory(f.grid, float(hdr.extra["M"]), label="loaded")
            traj.order = int(hdr.extra["order"])
        traj.times.append(hdr.time)
        traj.profiles.append(f)
    return traj


def _certify(cfg: RunConfig, man: RunManifest, opts):
    src = opts.get("trajectory")
    if not src:
        raise ValidationError("certify.trajectory", "certify needs --trajectory <dir>")
    traj = load_trajectory(src)
    n = traj.order
    depth = max(3, 2 * n)
    traj.jets = [jets_from_profile(p, t, n, traj.M, depth) for t, p in zip(traj.times, traj.profiles)]
    rep = certify_residual(traj, EFTConfig(n, cfg.numerics.N, cfg.numerics.k, traj.M), cfg.physics.coupling)
    p = os.path.join(man.directory, "residual.csv")
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "R_norm", "Rt_norm", "decay_norm"])
        for row in zip(rep.times, rep.R_norm, rep.Rt_norm, rep.decay_norm):
            w.writerow([repr(float(x)) for x in row])
    man.add(p)
    man.info.update(scattering=rep.scattering, notes=rep.notes, q_R=rep.q_R, q_decay=rep.q_decay)
    man.monitors["certified"] = bool(rep.scattering)


def _sweep(cfg: RunConfig, man: RunManifest, opts):
    orders = opts.get("orders")
    res = run_sweep(cfg.run.sweep, cfg.run.M_list, cfg, out_dir=man.directory, orders=orders,
                    workers=opts.get("workers"))
    for root, _, files in os.walk(man.directory):
        for name in sorted(files):
            if name != "manifest.json":
                man.add(os.path.join(root, name))
    man.artifacts.sort()
    for name, s in res.series.items():
        if s.passed is not None:
            man.monitors[name] = bool(s.passed)
    man.info["slopes"] = {k: s.slope for k, s in res.series.items()}


PIPELINES = {
    "simulate": _simulate,
    "resonance": _resonance,
    "eft-data": _eft_data,
    "eft-solve": _eft_solve,
    "certify": _certify,
    "sweep": _sweep,
}


def dispatch(cfg: RunConfig, out_dir=None, **opts) -> RunManifest:
    """Run the configured pipeline in its own directory and persist the manifest."""
    cfg.validate()
    d = out_dir or run_directory(cfg)
    os.makedirs(d, exist_ok=True)
    man = RunManifest(cfg.run.experiment, cfg.config_hash, __version__, time.time(), directory=os.path.abspath(d))
    man.add(write_config(cfg, os.path.join(d, "config.ini")))
    man.info["audit"] = cfg.audit()
    try:
        PIPELINES[cfg.run.experiment](cfg, man, opts)
    except KGEFTError as exc:
        if isinstance(exc, (ParseError, ValidationError)):
            raise
        raise type(exc)(f"[{cfg.run.experiment} in {d}] {exc}") from exc
    finally:
        man.finished = time.time()
        man.write()
    return man


# -------------------------------------------------------------- plot data


FIGURES = ("decay_curves", "resonance_sheets", "sweep_slopes")


def emit_plot_data(man: RunManifest, figure: str, k: float = 0.0, ps=(2.0, 4.0, math.inf)):
    """Flat CSV files for external plotting; each is added to the manifest."""
    if figure not in FIGURES:
        raise ValueError(f"figure must be one of {FIGURES}")
    out = []
    if figure == "decay_curves":
        U0, _ = read_fld(man.path("U0.fld"))
        U1, _ = read_fld(man.path("U1.fld"))
        times = np.geomspace(0.5, 400.0, 60)
        cols = [free_halfwave_norms(U0, U1, 1.0, times, NormSpec("Wkp", k, p)) for p in ps]
        path = os.path.join(man.directory, "decay_curves.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"W{k:g}_p{'inf' if math.isinf(p) else f'{p:g}'}" for p in ps])
            for i, t in enumerate(times):
                w.writerow([repr(float(t))] + [repr(float(c[i])) for c in cols])
        out.append(path)
    elif figure == "resonance_sheets":
        Ms = man.info.get("report", {}).get("M")
        if not Ms:
            raise MissingArtifact("the manifest holds no resonance report")
        out.extend(emit_sheets(man, Ms))
    else:
        with open(man.path("sweep.json")) as fh:
            d = json.load(fh)
        path = os.path.join(man.directory, "sweep_slopes.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "M", "metric", "fit", "residual"])
            for name, s in d["series"].items():
                slope, icpt = float(s["slope"]), float(s["intercept"])
                for M, v in zip(s["M"], s["values"]):
                    fitv = math.exp(icpt) * M**slope if math.isfinite(slope) and math.isfinite(icpt) else 0.0
                    w.writerow([name, repr(float(M)), repr(float(v)), repr(fitv), repr(float(s["residual"]))])
        out.append(path)
    for p in out:
        man.add(p)
    man.write()
    return out


# ---------------------------------------------------------------- parser


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def build_parser():
    ap = argparse.ArgumentParser(prog="kgeft", description="Light/heavy Klein-Gordon laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="sectioned key-value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="run directory (default: content-addressed under the output root)")
        p.add_argument("--M", type=_floats, help="heavy mass or comma list")
        p.add_argument("--T", type=float)
        return p

    common(sub.add_parser("simulate", help="integrate the UV system with monitors"))
    r = common(sub.add_parser("resonance", help="resonance geometry checks"))
    r.add_argument("--phase", choices=("u", "v"))
    r.add_argument("--signs")
    r.add_argument("--check", choices=("separation", "bounds", "symbols", "opnorm"))
    r.add_argument("--trials", type=int)
    r.add_argument("--sheets", help="also write resonance sheets to this directory")
    for name in ("eft-data", "eft-solve"):
        p = common(sub.add_parser(name))
        p.add_argument("--order", type=int)
    c = common(sub.add_parser("certify", help="residual certification of an eft-solve run"))
    c.add_argument("--trajectory", required=True)
    s = common(sub.add_parser("sweep", help="M-sweep with slope fits"))
    s.add_argument("--experiment", required=True)
    s.add_argument("--orders", type=_ints)
    pd = sub.add_parser("plot-data", help="flat CSVs for plotting from a run manifest")
    pd.add_argument("--manifest", required=True)
    pd.add_argument("--figure", required=True, choices=FIGURES)
    return ap


def config_from_args(args) -> RunConfig:
    cfg = parse_config(args.config, validate=False) if args.config else RunConfig()
    run = {"experiment": args.command}
    if args.seed is not None:
        run["seed"] = args.seed
    phys, num = {}, {}
    if args.M:
        run["M_list"] = tuple(args.M)
        phys["M"] = float(args.M[0])
    if args.T is not None:
        num["T"] = args.T
    for key in ("phase", "signs", "check", "trials"):
        v = getattr(args, key, None)
        if v is not None:
            run[key] = v
    if getattr(args, "experiment", None):
        run["sweep"] = args.experiment
    if getattr(args, "orders", None):
        run["orders"] = tuple(args.orders)
    if getattr(args, "order", None) is not None:
        phys["order"] = args.order
    return cfg.with_values(run=run, physics=phys, numerics=num)


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "plot-data":
            man = RunManifest.read(args.manifest)
            files = emit_plot_data(man, args.figure)
            print(json.dumps({"files": files}))
            return EXIT_OK
        cfg = config_from_args(args).validate()
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KGEFTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    opts = {k: getattr(args, k) for k in ("sheets", "trajectory", "orders") if getattr(args, k, None) is not None}
    if "KGEFT_WORKERS" in os.environ:
        opts["workers"] = int(os.environ["KGEFT_WORKERS"])
    try:
        man = dispatch(cfg, args.out, **opts)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KGEFTError, ValueError, ArithmeticError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(_clean({"directory": man.directory, "monitors": man.monitors, "info": man.info}),
                     sort_keys=True))
    return EXIT_OK if man.passed else EXIT_MONITOR


if __name__ == "__main__":
    sys.exit(main())
