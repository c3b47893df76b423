"""Integrator for the coupled light/heavy Klein-Gordon system.

Three equivalent descriptions of the same physics are supported:

``original``     (box - 1) Ub = Ub Vb,              (box - M^2) Vb = Ub^2 / 2
``v_modified``   (box - 1) Ub = Ub V - Ub^3/(2M^2),  (box - M^2) V  = (Ub^2 V - Ub^4/(2M^2) + dUb.dUb)/M^2
``rescaled``     (box - 1) U  = U V - U^3/2,         (box - M^2) V  = U^2 V - U^4/2 + dU.dU

with box = -d_t^2 + Lap, V = Vb + Ub^2/(2M^2) and U = Ub/M.  The two modified
forms omit the term Ub^2/M^2 (resp. U^2) that the substitution produces in the
heavy equation; ``UVModel.mass_term`` restores it, which makes all three
formulations exactly equivalent.

Time stepping is Lawson (integrating-factor) RK4 on the profiles
l_+ = exp(-i<D>t) u_+ and h_+ = exp(-i<D>_M t) v_+, so the linear flow is
exact and only the nonlinear profile derivatives are discretised.  Real
fields satisfy u_- = conj(u_+), so only the plus profiles are evolved.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .errors import CausalityBudgetExceeded, StepRejected, UnsupportedWeight
from .grid import (
    FOURIER,
    PHYSICAL,
    Field,
    GridSpec,
    NormSpec,
    check_same_grid,
    fourier_array,
    lp_quadrature,
    norm,
    physical_array,
    reflect_array,
    support_in_central_half,
)
from .propagators import ProfileSet, check_causality, linear_flow, support_radius

FORMULATIONS = ("original", "v_modified", "rescaled")


@dataclass(frozen=True)
class UVState:
    """Light field, heavy field and their velocities at time ``t``."""

    U: Field
    Ut: Field
    V: Field
    Vt: Field
    M: float
    t: float = 0.0
    formulation: str = "rescaled"

    def __post_init__(self):
        check_same_grid(self.U, self.Ut, self.V, self.Vt)
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")

    @property
    def grid(self) -> GridSpec:
        return self.U.grid

    @classmethod
    def zeros(cls, grid, M, formulation="rescaled"):
        z = Field.zeros(grid)
        return cls(z, z, z, z, M, 0.0, formulation)

    def arrays(self):
        return tuple(f.physical() for f in (self.U, self.Ut, self.V, self.Vt))


@dataclass(frozen=True)
class UVModel:
    """Switches for the right-hand side.

    ``coupling`` multiplies every nonlinear term (0 gives the free system).
    ``mass_term`` adds the U^2 (resp. Ub^2/M^2) heavy forcing that makes the
    modified formulations equivalent to the original one.
    """

    coupling: float = 1.0
    mass_term: bool = False


def _real_state(grid, U, Ut, V, Vt, M, t, formulation):
    mk = lambda a: Field(grid, np.real(a), PHYSICAL, True)
    return UVState(mk(U), mk(Ut), mk(V), mk(Vt), M, t, formulation)


def _to_original(s: UVState):
    U, Ut, V, Vt = (np.real(a) for a in s.arrays())
    M = s.M
    if s.formulation == "rescaled":
        U, Ut = M * U, M * Ut
    if s.formulation in ("rescaled", "v_modified"):
        V = V - U * U / (2 * M**2)
        Vt = Vt - U * Ut / M**2
    return U, Ut, V, Vt


def change_variables(s: UVState, target: str) -> UVState:
    """Map a state between the three formulations (pointwise on the grid)."""
    if target not in FORMULATIONS:
        raise ValueError(f"unknown formulation {target!r}")
    if target == s.formulation:
        return s
    U, Ut, V, Vt = _to_original(s)
    M = s.M
    if target in ("v_modified", "rescaled"):
        V = V + U * U / (2 * M**2)
        Vt = Vt + U * Ut / M**2
    if target == "rescaled":
        U, Ut = U / M, Ut / M
    return _real_state(s.grid, U, Ut, V, Vt, M, s.t, target)


# ------------------------------------------------------------- integrator


def lawson_rk4_step(rhs, profiles, omegas, t, dt):
    """One integrating-factor RK4 step for profiles p_j = exp(-i w_j t) u_j.

    ``rhs(tau, u_list)`` receives the half waves u_j = exp(i w_j tau) p_j and
    returns Fourier forcings N_j with d_t u_j = i w_j u_j - N_j.
    """
    def deriv(tau, ps):
        ph = [np.exp(1j * w * tau) for w in omegas]
        forcing = rhs(tau, [p * e for p, e in zip(ps, ph)])
        return [-n / e for n, e in zip(forcing, ph)]

    h = dt
    k1 = deriv(t, profiles)
    k2 = deriv(t + h / 2, [p + h / 2 * k for p, k in zip(profiles, k1)])
    k3 = deriv(t + h / 2, [p + h / 2 * k for p, k in zip(profiles, k2)])
    k4 = deriv(t + h, [p + h * k for p, k in zip(profiles, k3)])
    return [p + h / 6 * (a + 2 * b + 2 * c + d) for p, a, b, c, d in zip(profiles, k1, k2, k3, k4)]


def real_from_halfwave(grid: GridSpec, uhat, omega):
    """Fourier data of (U, U_t) for a real field with half wave u_+ = U_t + i<D>U."""
    partner = np.conj(reflect_array(grid, uhat))
    Uh = (uhat - partner) / (2j * omega)
    Uth = (uhat + partner) / 2
    return Uh, Uth


class UVIntegrator:
    """Lawson RK4 for one formulation on a fixed grid."""

    def __init__(self, grid: GridSpec, M: float, formulation="rescaled", model=UVModel()):
        if formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {formulation!r}")
        self.grid = grid
        self.M = float(M)
        self.formulation = formulation
        self.model = model
        self.omega = grid.japanese(1.0)
        self.Omega = grid.japanese(self.M)
        self.mask = grid.dealias_mask
        self.max_imag = 0.0

    # physical fields from the plus half waves
    def fields(self, uhat, vhat):
        g = self.grid
        Uh, Uth = real_from_halfwave(g, uhat, self.omega)
        Vh, Vth = real_from_halfwave(g, vhat, self.Omega)
        return Uh, Uth, Vh, Vth

    def nonlinearity(self, Uh, Uth, Vh):
        """Fourier forcings (N_U, N_V) with (box - 1)U = N_U and (box - M^2)V = N_V."""
        g = self.grid
        lam = self.model.coupling
        if lam == 0:
            return np.zeros_like(Uh), np.zeros_like(Vh)
        U = physical_array(g, Uh)
        V = physical_array(g, Vh)
        self.max_imag = max(self.max_imag, float(np.abs(U.imag).max()), float(np.abs(V.imag).max()))
        U, V = U.real, V.real
        M2 = self.M**2
        f = self.formulation
        if f == "original":
            NU = U * V
            NV = 0.5 * U * U
        else:
            Ut = physical_array(g, Uth).real
            grad2 = np.zeros(g.shape)
            for r in g.rho:
                grad2 = grad2 + physical_array(g, 1j * r * Uh).real ** 2
            dUdU = -Ut * Ut + grad2
            U2 = U * U
            if f == "rescaled":
                NU = U * V - 0.5 * U2 * U
                NV = U2 * V - 0.5 * U2 * U2 + dUdU
                if self.model.mass_term:
                    NV = NV + U2
            else:
                NU = U * V - U2 * U / (2 * M2)
                NV = (U2 * V - U2 * U2 / (2 * M2) + dUdU) / M2
                if self.model.mass_term:
                    NV = NV + U2 / M2
        NUh = fourier_array(g, lam * NU) * self.mask
        NVh = fourier_array(g, lam * NV) * self.mask
        return NUh, NVh

    def rhs(self, tau, halfwaves):
        uhat, vhat = halfwaves
        Uh, Uth, Vh, _ = self.fields(uhat, vhat)
        return list(self.nonlinearity(Uh, Uth, Vh))

    def step(self, lhat, hhat, t, dt):
        if self.model.coupling == 0:
            return lhat, hhat
        out = lawson_rk4_step(self.rhs, [lhat, hhat], [self.omega, self.Omega], t, dt)
        if not (np.all(np.isfinite(out[0])) and np.all(np.isfinite(out[1]))):
            raise StepRejected(f"non-finite profile after step at t = {t + dt}")
        return out[0], out[1]

    # state <-> profiles
    def profiles_from_state(self, s: UVState):
        g = self.grid
        U, Ut, V, Vt = (fourier_array(g, np.real(a)) for a in s.arrays())
        u = Ut + 1j * self.omega * U
        v = Vt + 1j * self.Omega * V
        return u * np.exp(-1j * self.omega * s.t), v * np.exp(-1j * self.Omega * s.t)

    def halfwaves(self, lhat, hhat, t):
        return lhat * np.exp(1j * self.omega * t), hhat * np.exp(1j * self.Omega * t)

    def state_from_profiles(self, lhat, hhat, t):
        g = self.grid
        u, v = self.halfwaves(lhat, hhat, t)
        Uh, Uth, Vh, Vth = self.fields(u, v)
        arrs = [physical_array(g, a) for a in (Uh, Uth, Vh, Vth)]
        self.max_imag = max(self.max_imag, *(float(np.abs(a.imag).max()) for a in arrs))
        return _real_state(g, *arrs, self.M, t, self.formulation)

    def profile_set(self, lhat, hhat, t):
        g = self.grid
        lp = Field(g, lhat, FOURIER)
        lm = Field(g, np.conj(reflect_array(g, lhat)), FOURIER)
        hp = Field(g, hhat, FOURIER)
        hm = Field(g, np.conj(reflect_array(g, hhat)), FOURIER)
        return ProfileSet(lp, lm, hp, hm, t, (1.0, self.M))


def default_dt(grid: GridSpec, M: float):
    """Default step: min(0.5 / <rho_max>_M, 0.1 dx) with rho_max the dealiased cutoff."""
    return min(0.5 / math.sqrt(dealiased_rho_max(grid) ** 2 + M**2), 0.1 * grid.dx)


def dealiased_rho_max(grid: GridSpec):
    return math.sqrt(grid.dim) * (2 * math.pi / grid.L) * math.floor(grid.n / 3)


def step(s: UVState, dt: float, model=UVModel()) -> UVState:
    """Advance one Lawson RK4 step in the rescaled variables.

    States in another formulation are converted, stepped and converted back.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    work = change_variables(s, "rescaled")
    integ = UVIntegrator(s.grid, s.M, "rescaled", model)
    lh, hh = integ.profiles_from_state(work)
    lh, hh = integ.step(lh, hh, work.t, dt)
    out = integ.state_from_profiles(lh, hh, work.t + dt)
    return change_variables(out, s.formulation)


# ------------------------------------------------------------------ norms


@dataclass(frozen=True)
class MonitorSpec:
    """Parameters of the X-norm monitor; p = (1/6 - delta)^-1."""

    N: int = 8
    k: int = 5
    delta: float = 1.0 / 14.0
    E: float = 1.0
    every: int = 20

    @property
    def p(self):
        return 1.0 / (1.0 / 6.0 - self.delta)

    def time_exponent(self, dim):
        """d(1/2 - 1/p); equals 1 + 3 delta in three dimensions."""
        return dim * (0.5 - 1.0 / self.p)


@dataclass
class XNormTrace:
    """Samples of the X-norm components; untracked S values are NaN."""

    t: list = dc_field(default_factory=list)
    Z_light: list = dc_field(default_factory=list)
    Z_heavy: list = dc_field(default_factory=list)
    S_light: list = dc_field(default_factory=list)
    S_heavy: list = dc_field(default_factory=list)
    N_light: list = dc_field(default_factory=list)
    N_heavy: list = dc_field(default_factory=list)
    X_total: list = dc_field(default_factory=list)

    COLUMNS = ("t", "Z_light", "Z_heavy", "S_light", "S_heavy", "N_light", "N_heavy", "X_total")

    def append(self, t, zl, zh, sl, sh, nl, nh):
        vals = (zl, zh, sl, sh, nl, nh)
        for name, v in zip(self.COLUMNS[1:-1], vals):
            getattr(self, name).append(float(v))
        self.t.append(float(t))
        self.X_total.append(float(np.nansum(vals)))

    def __len__(self):
        return len(self.t)

    def max_total(self):
        return max(self.X_total) if self.X_total else 0.0

    def rows(self):
        for i in range(len(self.t)):
            yield [getattr(self, c)[i] for c in self.COLUMNS]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow(["untracked" if isinstance(v, float) and math.isnan(v) else repr(v) for v in row])
        return path

    @classmethod
    def read_csv(cls, path):
        tr = cls()
        with open(path) as fh:
            r = csv.reader(fh)
            next(r)
            for row in r:
                vals = [float("nan") if v == "untracked" else float(v) for v in row]
                for name, v in zip(cls.COLUMNS, vals):
                    getattr(tr, name).append(v)
        return tr


def _weighted_or_nan(g, values, s):
    if not support_in_central_half(values, g):
        return float("nan")
    return norm(Field(g, values), NormSpec("weightedHs", s))


def xnorm_sample(integ: UVIntegrator, lhat, hhat, t, mon: MonitorSpec):
    """Z, S and N components of the X norm at one time."""
    g = integ.grid
    M = integ.M
    gam = mon.time_exponent(g.dim)
    u, v = integ.halfwaves(lhat, hhat, t)
    w1 = g.japanese(1.0)
    zl = (1 + t * t) ** (gam / 2) * lp_quadrature(g, physical_array(g, u * w1**mon.k), mon.p)
    zh = math.sqrt(M) * (1 + (t / M) ** 2) ** (gam / 2) * lp_quadrature(g, physical_array(g, v * w1**mon.k), mon.p)
    L = g.L**g.dim
    nl = math.sqrt(np.sum(np.abs(u * w1**mon.N) ** 2) / L)
    nh = math.sqrt(M) * math.sqrt(np.sum(np.abs(v * w1**mon.N) ** 2) / L)
    s = mon.k + 1.5
    sl = _weighted_or_nan(g, physical_array(g, lhat), s)
    sh = math.sqrt(M) * _weighted_or_nan(g, physical_array(g, hhat), s)
    return zl, zh, sl, sh, nl, nh


@dataclass
class DataNormReport:
    """Terms of the unweighted and weighted initial-data norms."""

    terms: dict
    total: float
    weighted_terms: dict
    weighted_total: float
    E: float
    M: float

    @property
    def passes(self):
        return self.total < self.E or (self.total == 0 and self.E >= 0)

    @property
    def weighted_passes(self):
        return self.weighted_total < self.E / self.M or self.weighted_total == 0


def data_norms(s: UVState, N: int, k: int, E: float) -> DataNormReport:
    """Evaluate M||U0||_N + M||U1||_{N-1} + M^3||V0||_{N-1} + M^2||V0||_N + M^2||V1||_{N-1}
    and ||u0||_N + M||v0||_N + ||x u0||_{k+3/2} + M||x v0||_{k+3/2} for half-wave data u0, v0.
    """
    s = change_variables(s, "rescaled")
    g = s.grid
    M = s.M
    hs = lambda f, r: norm(f, NormSpec("Hs", r))
    terms = {
        "M*|U0|_H^N": M * hs(s.U, N),
        "M*|U1|_H^(N-1)": M * hs(s.Ut, N - 1),
        "M^3*|V0|_H^(N-1)": M**3 * hs(s.V, N - 1),
        "M^2*|V0|_H^N": M**2 * hs(s.V, N),
        "M^2*|V1|_H^(N-1)": M**2 * hs(s.Vt, N - 1),
    }
    u0 = Field(g, s.Ut.fourier() + 1j * g.japanese(1.0) * s.U.fourier(), FOURIER)
    v0 = Field(g, s.Vt.fourier() + 1j * g.japanese(M) * s.V.fourier(), FOURIER)

    def weighted(f):
        vals = f.physical()
        if np.abs(vals).max() == 0:
            return 0.0
        return norm(Field(g, vals), NormSpec("weightedHs", k + 1.5))

    wterms = {
        "|u0|_H^N": hs(u0, N),
        "M*|v0|_H^N": M * hs(v0, N),
        "|x u0|_H^(k+3/2)": weighted(u0),
        "M*|x v0|_H^(k+3/2)": M * weighted(v0),
    }
    return DataNormReport(terms, float(sum(terms.values())), wterms, float(sum(wterms.values())), E, M)


# ----------------------------------------------------------------- evolve


@dataclass
class EvolveResult:
    """Final state, X-norm trace and profile snapshots of one run."""

    state: UVState
    trace: XNormTrace
    profiles: list
    steps: int = 0
    max_imag: float = 0.0

    def __iter__(self):
        return iter((self.state, self.trace, self.profiles))


def evolve(s: UVState, T: float, dt: float = None, monitors=("xnorm",), monitor=MonitorSpec(),
           model=UVModel(), profile_every=None, callback=None, support_R=None,
           check_dt=True) -> EvolveResult:
    """Integrate the rescaled system from s.t to s.t + T.

    ``monitors`` may contain ``"xnorm"`` (sampled every ``monitor.every`` steps)
    and ``"profiles"`` (a ProfileSet every ``profile_every`` steps, default at
    the start and the end).  ``callback(step, t, integrator, lhat, hhat)`` runs
    after every step.  The returned state is in the input's formulation.
    """
    g = s.grid
    M = s.M
    if dt is None:
        dt = default_dt(g, M)
    if check_dt and dt > 0.5 / math.sqrt(dealiased_rho_max(g) ** 2 + M**2) * (1 + 1e-12):
        raise ValueError("dt does not resolve the heavy frequency (dt <= 0.5/<rho_max>_M)")
    R = support_R if support_R is not None else support_radius(s.U, s.Ut, s.V, s.Vt)
    if g.L < 2 * (R + T):
        raise CausalityBudgetExceeded(f"box length {g.L} < 2(R + T) = {2 * (R + T)}")
    work = change_variables(s, "rescaled")
    integ = UVIntegrator(g, M, "rescaled", model)
    lh, hh = integ.profiles_from_state(work)
    nsteps = int(round(T / dt))
    if nsteps * dt < T - 1e-12 * max(1.0, T):
        nsteps += 1
    h = T / nsteps if nsteps else 0.0
    trace = XNormTrace()
    profiles = []
    want_x = "xnorm" in monitors
    want_p = "profiles" in monitors
    t0 = work.t
    if want_x:
        trace.append(t0, *xnorm_sample(integ, lh, hh, t0, monitor))
    if want_p:
        profiles.append(integ.profile_set(lh, hh, t0))
    if callback is not None:
        callback(0, t0, integ, lh, hh)
    for i in range(1, nsteps + 1):
        tprev = t0 + (i - 1) * h
        lh, hh = integ.step(lh, hh, tprev, h)
        t = t0 + i * h
        if want_x and (i % monitor.every == 0 or i == nsteps):
            trace.append(t, *xnorm_sample(integ, lh, hh, t, monitor))
        if want_p and ((profile_every and i % profile_every == 0) or i == nsteps):
            if not profiles or profiles[-1].time != t:
                profiles.append(integ.profile_set(lh, hh, t))
        if callback is not None:
            callback(i, t, integ, lh, hh)
    final = integ.state_from_profiles(lh, hh, t0 + nsteps * h)
    return EvolveResult(change_variables(final, s.formulation), trace, profiles, nsteps, integ.max_imag)


def evolve_direct(s: UVState, T: float, dt: float, model=UVModel()) -> UVState:
    """Integrate the state's own formulation without converting (used for equivalence checks)."""
    integ = UVIntegrator(s.grid, s.M, s.formulation, model)
    lh, hh = integ.profiles_from_state(s)
    nsteps = max(1, int(round(abs(T) / abs(dt))))
    h = T / nsteps
    t = s.t
    for _ in range(nsteps):
        lh, hh = integ.step(lh, hh, t, h)
        t += h
    return integ.state_from_profiles(lh, hh, t)


def gaussian_state(grid: GridSpec, M: float, amplitude: float, width: float = 3.0,
                   velocity: float = 0.0, center=None) -> UVState:
    """Rescaled state with U0 = amplitude * Gaussian, U1 = velocity * Gaussian, V = 0."""
    from .grid import gaussian_field

    G = gaussian_field(grid, 1.0, width, center)
    z = Field.zeros(grid)
    return UVState(G * amplitude, G * velocity, z, z, M, 0.0, "rescaled")


def scale_to_budget(s: UVState, N: int, k: int, E: float, theta: float = 0.5, weighted=True) -> UVState:
    """Rescale the light data so the chosen data norm equals theta * (E/M or E).

    The heavy data are left unchanged, so use this before building EFT data.
    """
    rep = data_norms(s, N, k, E)
    if weighted:
        light = rep.weighted_terms["|u0|_H^N"] + rep.weighted_terms["|x u0|_H^(k+3/2)"]
        target = theta * E / s.M
    else:
        light = rep.terms["M*|U0|_H^N"] + rep.terms["M*|U1|_H^(N-1)"]
        target = theta * E
    if light == 0:
        return s
    c = target / light
    return replace(s, U=s.U * c, Ut=s.Ut * c)
