"""Run configuration: a sectioned key-value file with validation and audit flags.

Sections are [grid], [data], [physics], [numerics], [monitors] and [run].  Every
physics constant is written out by :func:`serialize`, so a saved config is
self-describing and hashes identically whenever its contents agree.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field as dc_field, fields, replace

import numpy as np

from .errors import ParseError, ValidationError
from .grid import Field, GridSpec, NormSpec, gaussian_field, gaussian_support_radius, norm, random_bandlimited, read_fld

GENERATORS = ("gaussian", "random", "zero", "fld")
EXPERIMENTS = ("simulate", "resonance", "eft-data", "eft-solve", "certify", "sweep")
SWEEPS = ("decay", "vm_suppression", "scattering_gap", "xnorm_bound", "hierarchy_gap")
FORMULATIONS = ("original", "v_modified", "rescaled")
MONITORS = ("xnorm", "profiles")

# seed streams: one counted child generator per randomized consumer
STREAM_DATA = 0
STREAM_OPNORM = 1
STREAM_SAMPLES = 2


@dataclass(frozen=True)
class GridSection:
    dim: int = 1
    n: int = 512
    L: float = 400.0


@dataclass(frozen=True)
class DataSection:
    generator: str = "gaussian"
    amplitude: float = 1.0
    width: float = 3.0
    velocity: float = 0.0
    band: float = 1.0 / 3.0
    budget: bool = True
    theta: float = 0.5
    support_radius: float = None
    u0_path: str = ""
    u1_path: str = ""


@dataclass(frozen=True)
class PhysicsSection:
    M: float = 16.0
    E: float = 1.0
    formulation: str = "rescaled"
    order: int = 0
    include_u2v: bool = False
    mass_term: bool = False
    coupling: float = 1.0
    a_multipliers: bool = False


@dataclass(frozen=True)
class NumericsSection:
    dt: float = None
    T: float = 150.0
    N: int = 8
    k: int = 5
    s: float = 2.5
    delta: float = 1.0 / 14.0
    a_reg: float = 2.0
    sample_every: int = 0


@dataclass(frozen=True)
class MonitorsSection:
    names: tuple = ("xnorm",)
    every: int = 20
    xnorm_bound: float = 10.0


@dataclass(frozen=True)
class RunSection:
    experiment: str = "simulate"
    sweep: str = "scattering_gap"
    M_list: tuple = (8.0, 16.0, 32.0, 64.0)
    orders: tuple = (0, 1)
    seed: int = 20240517
    out: str = "runs"
    phase: str = "u"
    signs: str = "+-+"
    check: str = "separation"
    trials: int = 200
    require_certified: bool = False


SECTIONS = {
    "grid": GridSection,
    "data": DataSection,
    "physics": PhysicsSection,
    "numerics": NumericsSection,
    "monitors": MonitorsSection,
    "run": RunSection,
}


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = dc_field(default_factory=GridSection)
    data: DataSection = dc_field(default_factory=DataSection)
    physics: PhysicsSection = dc_field(default_factory=PhysicsSection)
    numerics: NumericsSection = dc_field(default_factory=NumericsSection)
    monitors: MonitorsSection = dc_field(default_factory=MonitorsSection)
    run: RunSection = dc_field(default_factory=RunSection)

    # ---- derived objects

    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec(self.grid.dim, self.grid.n, self.grid.L)

    def with_values(self, **sections):
        """Copy with selected fields replaced, e.g. with_values(physics={"M": 32.0})."""
        out = self
        for name, updates in sections.items():
            out = replace(out, **{name: replace(getattr(out, name), **updates)})
        return out

    def rng(self, stream: int):
        """Independent generator for one consumer, derived from the single seed."""
        return np.random.default_rng(np.random.SeedSequence(self.run.seed, spawn_key=(stream,)))

    def declared_support_radius(self) -> float:
        d = self.data
        if d.support_radius is not None:
            return float(d.support_radius)
        if d.generator == "gaussian":
            return gaussian_support_radius(d.width)
        if d.generator == "zero":
            return 0.0
        if d.generator == "random":
            return self.grid.L / 2.0
        return 0.0

    def budget_regularity(self, order=None) -> int:
        order = self.physics.order if order is None else order
        return self.numerics.N + 2 * order + 1

    def light_data(self, order=None):
        """Light data (u0, u1) in the unrescaled normalisation u = M U.

        With ``budget`` on, the data are scaled so |u0|_H^(N+2n+1) + |u1|_H^(N+2n)
        equals theta * E, which makes M |U_0| independent of M.
        """
        g = self.grid_spec
        d = self.data
        if d.generator == "gaussian":
            u0 = gaussian_field(g, d.amplitude, d.width)
            u1 = gaussian_field(g, d.velocity, d.width)
        elif d.generator == "random":
            rng = self.rng(STREAM_DATA)
            u0 = random_bandlimited(g, rng, d.band, True, 2.0) * d.amplitude
            u1 = random_bandlimited(g, rng, d.band, True, 2.0) * d.velocity
        elif d.generator == "zero":
            u0 = Field.zeros(g)
            u1 = Field.zeros(g)
        else:
            u0 = read_fld(d.u0_path)[0]
            u1 = read_fld(d.u1_path)[0] if d.u1_path else Field.zeros(u0.grid)
        if d.budget and d.generator != "zero":
            r = self.budget_regularity(order)
            size = norm(u0, NormSpec("Hs", r)) + norm(u1, NormSpec("Hs", r - 1))
            if size > 0:
                c = d.theta * self.physics.E / size
                u0, u1 = u0 * c, u1 * c
        return u0, u1

    # ---- checks

    def audit(self) -> dict:
        """Parameter inequalities of the regularity hierarchy; recorded, not enforced."""
        n = self.numerics
        return {
            "N>k+6": n.N > n.k + 6,
            "N>=k+3": n.N >= n.k + 3,
            "k>s+2": n.k > n.s + 2,
            "s>a": n.s > n.a_reg,
        }

    def validate(self):
        g, d, p, n, m, r = self.grid, self.data, self.physics, self.numerics, self.monitors, self.run

        def rule(ok, name, msg):
            if not ok:
                raise ValidationError(name, msg)

        rule(g.dim in (1, 2, 3), "grid.dim", "dim must be 1, 2 or 3")
        rule(g.n >= 8 and g.n & (g.n - 1) == 0, "grid.n", "points per axis must be a power of two >= 8")
        rule(g.L > 0, "grid.L", "box length must be positive")
        rule(d.generator in GENERATORS, "data.generator", f"generator must be one of {GENERATORS}")
        rule(d.generator != "fld" or bool(d.u0_path), "data.fld", "fld data need u0_path")
        rule(d.width > 0, "data.width", "width must be positive")
        rule(0 < d.band <= 1, "data.band", "band must lie in (0, 1]")
        rule(p.M > 1, "physics.M", "heavy mass must exceed 1")
        rule(p.E > 0, "physics.E", "E must be positive")
        rule(p.formulation in FORMULATIONS, "physics.formulation", f"formulation must be one of {FORMULATIONS}")
        rule(p.order >= 0, "physics.order", "order must be non-negative")
        rule(n.dt is None or n.dt > 0, "numerics.dt", "dt must be positive or auto")
        rule(n.T >= 0, "numerics.T", "T must be non-negative")
        rule(n.N > n.k >= 0, "numerics.N", "need N > k >= 0")
        rule(0 < n.delta < 1.0 / 6.0, "numerics.delta", "delta must lie in (0, 1/6)")
        rule(all(x in MONITORS for x in m.names), "monitors.names", f"monitors must be among {MONITORS}")
        rule(m.every >= 1, "monitors.every", "cadence must be >= 1")
        rule(r.experiment in EXPERIMENTS, "run.experiment", f"experiment must be one of {EXPERIMENTS}")
        rule(r.sweep in SWEEPS, "run.sweep", f"sweep must be one of {SWEEPS}")
        rule(all(M > 1 for M in r.M_list), "run.M_list", "all masses must exceed 1")
        rule(r.experiment != "sweep" or len(r.M_list) >= 4, "run.M_list", "a sweep needs at least 4 masses")
        rule(all(o >= 0 for o in r.orders), "run.orders", "orders must be non-negative")
        rule(r.phase in ("u", "v"), "run.phase", "phase must be u or v")
        rule(len(r.signs) == 3 and all(c in "+-" for c in r.signs), "run.signs", "signs look like +-+")
        R = self.declared_support_radius()
        need = 2 * (R + n.T)
        if r.experiment not in ("resonance", "eft-data"):
            rule(g.L >= need, "causality", f"box length {g.L} < 2(R + T) = {need:g}; needs L >= {need:g}")
        return self

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()


# ------------------------------------------------------------ text format


def _fmt(v):
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _convert(cls, key, text):
    default = getattr(cls(), key)
    text = text.strip()
    if text == "auto" and default is None:
        return None
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float) or default is None:
        return float(text)
    if isinstance(default, tuple):
        parts = [x.strip() for x in text.split(",") if x.strip()]
        kind = type(default[0]) if default else str
        return tuple(kind(x) for x in parts)
    return text


def _locate(text, section, key):
    cur = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            continue
        if cur == section and "=" in s:
            k = s.split("=", 1)[0].strip()
            if k == key:
                col = line.index("=") + 2
                while col <= len(line) and line[col - 1] == " ":
                    col += 1
                return i, col
    return 0, 0


def parse_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("missing section header", exc.lineno, 1) from exc
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno or 0, 1) from exc
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r}", exc.lineno or 0, 1) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else 0
        raise ParseError("malformed line", line, 1) from exc
    parts = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            line, _ = _locate_section(text, sec)
            raise ParseError(f"unknown section [{sec}]", line, 1)
        cls = SECTIONS[sec]
        names = {f.name for f in fields(cls)}
        vals = {}
        for key, raw in cp.items(sec):
            line, col = _locate(text, sec, key)
            if key not in names:
                raise ParseError(f"unknown key {key!r} in [{sec}]", line, 1)
            try:
                vals[key] = _convert(cls, key, raw)
            except ValueError as exc:
                raise ParseError(f"[{sec}] {key}: {exc}", line, col) from exc
        parts[sec] = cls(**vals)
    return RunConfig(**parts)


def _locate_section(text, sec):
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{sec}]":
            return i, 1
    return 0, 0


def parse_config(path, validate=True) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    cfg = parse_text(text)
    return cfg.validate() if validate else cfg


def serialize(cfg: RunConfig) -> str:
    lines = []
    for sec, cls in SECTIONS.items():
        obj = getattr(cfg, sec)
        lines.append(f"[{sec}]")
        for f in fields(cls):
            lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def write_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        fh.write(serialize(cfg))
    return path
