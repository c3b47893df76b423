"""Effective-field-theory machinery for the rescaled system.

Time derivatives are never finite-differenced: they come from jet closure
through the equations of motion.  Sign convention: the heavy ground state is

    V ~ -sum_i F_i[U] / M^(2i),   F_1 = dU.dU - U^4/2,  F_{i+1} = box F_i,

so the shifted heavy field is V^m = V + sum_{i<=m} F_i[U] / M^(2i), which
obeys (box - M^2) V^m = U^2 V + box F_m / M^(2m).

For the light field alone, written as u = M U, eliminating V order by order
gives (box - 1) u = sum_i g_i[u] / M^i with g_odd = 0, g_2 = -u^3/2 and

    g_(2k+2) = -u box^(k-1) Q + [k >= 2] u box^(k-2) P,   Q = du.du,  P = u^4/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import BudgetExceeded, InsufficientJetDepth, NonConvergence, StepRejected
from .grid import FOURIER, PHYSICAL, Field, GridSpec, NormSpec, check_same_grid, fourier_array, norm, physical_array
from .jets import (
    JetField,
    dealiased,
    jet_box,
    jet_lorentz_dot,
    jet_multiply,
    jet_power,
    spectral_gradient,
    spectral_laplacian,
)
from .propagators import ExponentFit, fit_power_law
from .solver import UVState, change_variables, lawson_rk4_step, real_from_halfwave


@dataclass(frozen=True)
class EFTConfig:
    """Order n of the expansion, regularities N and k, heavy mass M and jet depth J."""

    order: int
    N: int = 8
    k: int = 5
    M: float = 16.0
    J: int = None
    include_u2v: bool = False
    E: float = 1.0
    mass_term: bool = False

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be non-negative")
        J = 2 * self.order + 2 if self.J is None else self.J
        if J < 2 * self.order + 2:
            raise InsufficientJetDepth(f"jet depth {J} < 2n + 2 = {2 * self.order + 2}")
        object.__setattr__(self, "J", J)


# ----------------------------------------------------------------- closure


def _nonlinear_jets(Uj: JetField, Vj: JetField, upto: int, mass_term=False, coupling=1.0):
    """Jets of N_U = UV - U^3/2 and N_V = U^2V - U^4/2 + dU.dU up to index ``upto``."""
    U = Uj.truncate(upto + 1)
    Ua = U.truncate(upto)
    V = Vj.truncate(upto)
    U2 = jet_multiply(Ua, Ua)
    NU = jet_multiply(Ua, V) - jet_multiply(U2, Ua).scale(0.5)
    NV = jet_multiply(U2, V) - jet_multiply(U2, U2).scale(0.5) + jet_lorentz_dot(U, U)
    if mass_term:
        NV = NV + U2
    return NU.scale(coupling), NV.scale(coupling)


def eom_jet_closure(U_jets: JetField, V_jets: JetField, M: float, J: int, mass_term=False,
                    coupling=1.0):
    """Extend order-1 jets of U and V to order J using the rescaled equations of motion.

    U_{s+2} = Lap U_s - U_s - (N_U)_s and V_{s+2} = Lap V_s - M^2 V_s - (N_V)_s.
    """
    check_same_grid(U_jets.jets[0], V_jets.jets[0])
    if J < 2:
        raise ValueError("closure depth must be at least 2")
    if U_jets.order < 1 or V_jets.order < 1:
        raise InsufficientJetDepth("closure needs the field and its first time derivative")
    g = U_jets.grid
    Ua = list(U_jets.arrays[:2])
    Va = list(V_jets.arrays[:2])
    for s in range(J - 1):
        NU, NV = _nonlinear_jets(JetField(g, tuple(Ua)), JetField(g, tuple(Va)), s, mass_term, coupling)
        Ua.append(spectral_laplacian(g, Ua[s]) - Ua[s] - NU[s])
        Va.append(spectral_laplacian(g, Va[s]) - M**2 * Va[s] - NV[s])
    return JetField(g, tuple(Ua)), JetField(g, tuple(Va))


def state_jets(s: UVState, J: int, mass_term=False):
    """Jets of (U, V) of a state, closed to order J through the rescaled equations."""
    s = change_variables(s, "rescaled")
    Uj = JetField.from_fields([s.U, s.Ut])
    Vj = JetField.from_fields([s.V, s.Vt])
    return eom_jet_closure(Uj, Vj, s.M, J, mass_term)


# ------------------------------------------------------------ functionals


def eft_functional(i: int, U_jets: JetField, V_jets: JetField = None, include_u2v=False,
                   mass_term=False) -> JetField:
    """F_i as a jet.  F_1 = dU.dU - U^4/2 (+ U^2 V), F_(i+1) = box F_i.

    Needs U jets of order >= 2i - 1; the result has order U.order - 2i + 1.
    """
    if i < 1:
        raise ValueError("F_i is defined for i >= 1")
    if U_jets.order < 2 * i - 1:
        raise InsufficientJetDepth(f"F_{i} needs U jets of order {2 * i - 1}, got {U_jets.order}")
    o = U_jets.order - 1
    Ua = U_jets.truncate(o)
    U2 = jet_multiply(Ua, Ua)
    F = jet_lorentz_dot(U_jets, U_jets) - jet_multiply(U2, U2).scale(0.5)
    if include_u2v:
        if V_jets is None:
            raise ValueError("include_u2v needs V jets")
        if V_jets.order < o:
            raise InsufficientJetDepth("V jets too short for the U^2 V term")
        F = F + jet_multiply(U2, V_jets.truncate(o))
    if mass_term:
        F = F + U2
    for _ in range(i - 1):
        F = jet_box(F)
    return F


def g_depth(i: int, index: int = 0):
    """Order of u jets that g_i needs to produce jet entry ``index``."""
    if i == 2:
        return index
    return i - 3 + index


def g_functional(i: int, u: JetField):
    """g_i[u] as a jet, or None for the vanishing odd terms."""
    if i < 2 or i % 2:
        return None
    if i == 2:
        return jet_power(u, 3).scale(-0.5)
    k = (i - 2) // 2
    if u.order < 2 * k - 1:
        raise InsufficientJetDepth(f"g_{i} needs u jets of order {2 * k - 1}")
    B = jet_lorentz_dot(u, u)
    for _ in range(k - 1):
        B = jet_box(B)
    out = -jet_multiply(u.truncate(B.order), B)
    if k >= 2:
        P = jet_power(u, 4).scale(0.5)
        for _ in range(k - 2):
            P = jet_box(P)
        m = min(out.order, P.order)
        out = out.truncate(m) + jet_multiply(u.truncate(m), P.truncate(m))
    return out


# -------------------------------------------------------------- EFT data


@dataclass
class EFTDataBundle:
    """Initial data (U_0, U_1, V_0, V_1) obeying the EFT conditions to ``order``."""

    U_0: Field
    U_1: Field
    V_0: Field
    V_1: Field
    order: int
    P_terms: list = dc_field(default_factory=list)
    iterates: list = dc_field(default_factory=list)

    def state(self, M, formulation="rescaled"):
        st = UVState(self.U_0, self.U_1, self.V_0, self.V_1, M, 0.0, "rescaled")
        return change_variables(st, formulation)


def make_eft_data(U_0: Field, U_1: Field, cfg: EFTConfig, V_start=None, check_budget=True) -> EFTDataBundle:
    """Fixed-point construction of heavy data in its ground state to order n.

    Starting from V = 0 (or ``V_start``), each pass closes the jets through the
    equations of motion and sets V_0 = -sum_i F_i[jet 0]/M^(2i),
    V_1 = -sum_i F_i[jet 1]/M^(2i).  ``P_terms`` holds -F_i at jet indices 0 and 1.
    """
    check_same_grid(U_0, U_1)
    g = U_0.grid
    M = cfg.M
    n = cfg.order
    if check_budget:
        size = M * norm(U_0, NormSpec("Hs", cfg.N + 2 * n + 1))
        if size > cfg.E:
            raise BudgetExceeded(f"M |U_0|_H^(N+2n+1) = {size:.3e} exceeds E = {cfg.E}")
    z = np.zeros(g.shape)
    if V_start is None:
        V0, V1 = z.astype(complex), z.astype(complex)
    else:
        V0, V1 = np.asarray(V_start[0].physical()), np.asarray(V_start[1].physical())
    Uj = JetField.from_fields([U_0, U_1])
    P_terms = []
    iterates = [V0]
    diffs = []
    depth = max(2 * n, 2)
    for _ in range(n + 1 if n else 0):
        Ujets, Vjets = eom_jet_closure(Uj, JetField(g, (V0, V1)), M, depth, cfg.mass_term)
        new0 = np.zeros(g.shape, complex)
        new1 = np.zeros(g.shape, complex)
        P_terms = []
        for i in range(1, n + 1):
            F = eft_functional(i, Ujets.truncate(2 * i), Vjets, cfg.include_u2v, cfg.mass_term)
            new0 = new0 - F[0] / M ** (2 * i)
            new1 = new1 - F[1] / M ** (2 * i)
            P_terms.extend([Field(g, -F[0]), Field(g, -F[1])])
        diffs.append(norm(Field(g, new0 - V0), NormSpec("Hs", 0.0)))
        V0, V1 = new0, new1
        iterates.append(V0)
    for a, b in zip(diffs[1:], diffs[2:]):
        if a > 0 and b > a * 2.0 / M**2 * (1 + 1e-9) and b > 1e-15 * max(1.0, np.abs(V0).max()):
            raise NonConvergence(f"V_0 iterates did not contract by M^2/2: {a:.3e} -> {b:.3e}")
    mk = lambda a: Field(g, np.real(a), PHYSICAL, True)
    return EFTDataBundle(U_0, U_1, mk(V0), mk(V1), n, P_terms, [mk(v) for v in iterates])


def vm_transform(states, m: int, include_u2v=False, mass_term=False, s_index: int = 0):
    """V^m = V + sum_{i<=m} F_i[U]/M^(2i) for each stored state (entry ``s_index`` of its jet)."""
    out = []
    for st in states:
        st = change_variables(st, "rescaled")
        if m == 0:
            vals = st.V.physical() if s_index == 0 else None
            if vals is None:
                _, Vj = state_jets(st, max(2, s_index), mass_term)
                vals = Vj[s_index]
            out.append(Field(st.grid, np.real(vals), PHYSICAL, True))
            continue
        depth = max(2, 2 * m - 1 + s_index)
        Uj, Vj = state_jets(st, depth, mass_term)
        acc = np.array(Vj[s_index])
        for i in range(1, m + 1):
            F = eft_functional(i, Uj.truncate(2 * i - 1 + s_index), Vj, include_u2v, mass_term)
            acc = acc + F[s_index] / st.M ** (2 * i)
        out.append(Field(st.grid, np.real(acc), PHYSICAL, True))
    return out


# ---------------------------------------------------------- light solvers


class _LightIntegrator:
    """Lawson RK4 for one or more mass-1 real fields described by their plus half waves."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.omega = grid.japanese(1.0)
        self.mask = grid.dealias_mask

    def base_jets(self, uhat):
        g = self.grid
        Uh, Uth = real_from_halfwave(g, uhat, self.omega)
        return np.real(physical_array(g, Uh)), np.real(physical_array(g, Uth))

    def project(self, values):
        return fourier_array(self.grid, np.real(values)) * self.mask


@dataclass
class LightTrajectory:
    """Samples of a light field in the unrescaled normalisation u = M U."""

    grid: GridSpec
    M: float
    times: list = dc_field(default_factory=list)
    jets: list = dc_field(default_factory=list)
    profiles: list = dc_field(default_factory=list)
    label: str = ""

    @property
    def final_profile(self):
        return self.profiles[-1]


def _eft_closure(u0, u1, order, M, J, grid, extra=None):
    """Jets of u for (box - 1) u = sum_{i<=order} g_i/M^i, closed with the g_2 and g_4 terms.

    Higher g_i need more time derivatives than the equation supplies at the
    same step; they enter the closure only at relative order M^-6 and are dropped.
    """
    arrs = [np.asarray(u0, complex), np.asarray(u1, complex)]
    for s in range(J - 1):
        u = JetField(grid, tuple(arrs))
        forcing = np.zeros(grid.shape, complex)
        for i in (2, 4):
            if i > order:
                continue
            need = g_depth(i, s)
            gi = g_functional(i, u.truncate(need))
            forcing = forcing + gi[s] / M**i
        if extra is not None and s == 0:
            forcing = forcing + extra
        arrs.append(spectral_laplacian(grid, arrs[s]) - arrs[s] - forcing)
    return JetField(grid, tuple(arrs))


def solve_eft(u0: Field, u1: Field, order: int, M: float, T: float, dt: float,
              perturbation=None, sample_every: int = 0, jet_depth: int = 3, record_jets=False,
              coupling=1.0) -> LightTrajectory:
    """Solve (box - 1) u = coupling * sum_{i<=order} g_i[u]/M^i (+ perturbation(t, grid)).

    ``perturbation(t)`` returns a physical array added to the right-hand side.
    Profiles l_+ are recorded at the start, every ``sample_every`` steps and at T.
    """
    g = check_same_grid(u0, u1)
    L = _LightIntegrator(g)
    uhat = u1.fourier() + 1j * L.omega * u0.fourier()
    prof = uhat.copy()
    traj = LightTrajectory(g, M, label=f"eft order {order}")
    J_need = max((g_depth(i) for i in range(2, order + 1, 2)), default=0)

    def forcing(tau, halfwaves):
        (uh,) = halfwaves
        u, ut = L.base_jets(uh)
        N = np.zeros(g.shape)
        if coupling and order >= 2:
            if J_need <= 1:
                jets = JetField(g, (u, ut))
            else:
                jets = _eft_closure(u, ut, order, M, J_need, g)
            for i in range(2, order + 1, 2):
                gi = g_functional(i, jets.truncate(g_depth(i)))
                N = N + coupling * np.real(gi[0]) / M**i
        if perturbation is not None:
            N = N + perturbation(tau)
        return [L.project(N)]

    def record(t, p):
        traj.times.append(t)
        traj.profiles.append(Field(g, p, FOURIER))
        if record_jets:
            u, ut = L.base_jets(p * np.exp(1j * L.omega * t))
            traj.jets.append(_eft_closure(u, ut, order, M, jet_depth, g))

    nsteps = max(1, int(round(T / dt)))
    h = T / nsteps
    record(0.0, prof)
    for i in range(1, nsteps + 1):
        (prof,) = lawson_rk4_step(forcing, [prof], [L.omega], (i - 1) * h, h)
        if not np.all(np.isfinite(prof)):
            raise StepRejected(f"non-finite EFT profile at t = {i * h}")
        if (sample_every and i % sample_every == 0) or i == nsteps:
            record(i * h, prof)
    return traj


def jets_from_profile(profile: Field, t: float, order: int, M: float, depth: int = 3) -> JetField:
    """Jets of u at time t from a stored plus-profile, closed with the order-n EFT equation."""
    g = profile.grid
    L = _LightIntegrator(g)
    u, ut = L.base_jets(profile.fourier() * np.exp(1j * L.omega * t))
    return _eft_closure(u, ut, order, M, depth, g)


@dataclass
class HierarchyResult:
    """Trajectories of the hierarchy levels on a shared time grid."""

    grid: GridSpec
    M: float
    order: int
    times: list
    levels: list  # levels[j] is a LightTrajectory for level j


def _level_jets(grid, base, M, l, depth, cache):
    """Jets of hierarchy level l to ``depth`` using the level's own equation."""
    hit = cache.get(l)
    if hit is not None and hit.order >= depth:
        return hit.truncate(depth)
    u, ut = base[l]
    arrs = [np.asarray(u, complex), np.asarray(ut, complex)]
    if depth >= 2:
        G = []
        for i in range(2, l + 1, 2):
            need = g_depth(i, depth - 2)
            lower = _level_jets(grid, base, M, l - i, need, cache)
            G.append((i, g_functional(i, lower)))
        for s in range(depth - 1):
            forcing = np.zeros(grid.shape, complex)
            for i, gi in G:
                forcing = forcing + gi[s] / M**i
            arrs.append(spectral_laplacian(grid, arrs[s]) - arrs[s] - forcing)
    jet = JetField(grid, tuple(arrs[: depth + 1]))
    cache[l] = jet
    return jet


def solve_eft_hierarchy(u0: Field, u1: Field, cfg: EFTConfig, T: float, dt: float,
                        sample_every: int = 0, record_jets=False, jet_depth=3,
                        coupling=1.0) -> HierarchyResult:
    """Solve (box - 1) U_j = sum_{i=1}^{j} g_i[U_{j-i}]/M^i for j = 0..n with common data.

    All levels advance together as one triangular system, so every forcing is
    evaluated at exactly the stage times where it is needed.  Level 0 has no
    forcing and its profile stays exactly constant.
    """
    g = check_same_grid(u0, u1)
    n = cfg.order
    M = cfg.M
    L = _LightIntegrator(g)
    uhat = u1.fourier() + 1j * L.omega * u0.fourier()
    profs = [uhat.copy() for _ in range(n + 1)]
    trajs = [LightTrajectory(g, M, label=f"level {j}") for j in range(n + 1)]

    def forcing(tau, halfwaves):
        base = [L.base_jets(h) for h in halfwaves]
        cache = {}
        out = []
        for j in range(n + 1):
            N = np.zeros(g.shape)
            if coupling:
                for i in range(2, j + 1, 2):
                    lower = _level_jets(g, base, M, j - i, g_depth(i), cache)
                    N = N + np.real(g_functional(i, lower)[0]) / M**i
            out.append(L.project(coupling * N))
        return out

    def record(t, ps):
        base = [L.base_jets(p * np.exp(1j * L.omega * t)) for p in ps]
        cache = {}
        for j in range(n + 1):
            trajs[j].times.append(t)
            trajs[j].profiles.append(Field(g, ps[j], FOURIER))
            if record_jets:
                trajs[j].jets.append(_level_jets(g, base, M, j, jet_depth, cache))

    nsteps = max(1, int(round(T / dt)))
    h = T / nsteps
    times = [0.0]
    record(0.0, profs)
    for i in range(1, nsteps + 1):
        profs = lawson_rk4_step(forcing, profs, [L.omega] * (n + 1), (i - 1) * h, h)
        if not all(np.all(np.isfinite(p)) for p in profs):
            raise StepRejected(f"non-finite hierarchy profile at t = {i * h}")
        if (sample_every and i % sample_every == 0) or i == nsteps:
            record(i * h, profs)
            times.append(i * h)
    return HierarchyResult(g, M, n, times, trajs)


def uv_light_trajectory(samples, M, jet_depth=3, mass_term=False):
    """Light-field jets u = M U along a list of UV states."""
    st0 = samples[0]
    traj = LightTrajectory(st0.grid, M, label="uv")
    for st in samples:
        Uj, _ = state_jets(st, jet_depth, mass_term)
        traj.times.append(st.t)
        traj.jets.append(Uj.scale(M))
    return traj


# ------------------------------------------------------------- residuals


@dataclass
class ResidualReport:
    """Residual of the order-n EFT equation along a trajectory."""

    times: list
    R_norm: list
    Rt_norm: list
    decay_norm: list
    integral_R: float
    integral_Rt: float
    integral_decay: float
    q_R: float
    q_Rt: float
    q_decay: float
    scattering: bool
    notes: list = dc_field(default_factory=list)


def _tail_integral(times, values, floor):
    """Trapezoid integral plus a power-law tail fitted on the last decade.

    Returns (integral, q, ok).  Values below ``floor`` everywhere count as zero.
    """
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    body = float(np.trapezoid(v, t)) if len(t) > 1 else 0.0
    if np.all(v <= floor):
        return body, float("inf"), True
    T = t[-1]
    fit = fit_power_law(t, v, (T / 10.0, T))
    q = -fit.slope
    if not np.isfinite(q) or q <= 1:
        return body, q, False
    A = math.exp(fit.intercept)
    return body + A * T ** (1 - q) / (q - 1), q, True


def residual_jets(u: JetField, n: int, M: float, coupling=1.0):
    """R_M = M^(n+1) ((box - 1)u - sum_{i<=n} g_i[u]/M^i) at jet indices 0 and 1."""
    g = u.grid
    box = jet_box(u.truncate(3))
    R = [box[s] - u[s] for s in range(2)]
    for i in range(2, n + 1, 2):
        gi = g_functional(i, u.truncate(g_depth(i, 1)))
        for s in range(2):
            R[s] = R[s] - coupling * gi[s] / M**i
    return [M ** (n + 1) * np.real(r) for r in R]


def certify_residual(traj: LightTrajectory, cfg: EFTConfig, coupling=1.0, floor=1e-12) -> ResidualReport:
    """Residual norms in H^(N-n), their time integrals and the decay condition."""
    n = cfg.order
    M = traj.M
    g = traj.grid
    need = max(3, max((g_depth(i, 1) for i in range(2, n + 1, 2)), default=0))
    Rn, Rtn, dec = [], [], []
    for jet in traj.jets:
        if jet.order < need:
            raise InsufficientJetDepth(f"certification needs jets of order {need}")
        R, Rt = residual_jets(jet, n, M, coupling)
        Rn.append(norm(Field(g, R), NormSpec("Hs", cfg.N - n)))
        Rtn.append(norm(Field(g, Rt), NormSpec("Hs", cfg.N - n)))
        worst = 0.0
        for a in range(0, n + 1):
            if a > jet.order:
                break
            arr = np.real(jet[a])
            worst = max(worst, float(np.abs(arr).max()))
            fh = fourier_array(g, arr)
            for order_x in range(1, n - a + 1):
                for r in g.rho:
                    worst = max(worst, float(np.abs(physical_array(g, (1j * r) ** order_x * fh)).max()))
        dec.append(worst)
    scale = max(1.0, max(Rn, default=0.0))
    iR, qR, okR = _tail_integral(traj.times, Rn, floor * scale)
    iRt, qRt, okRt = _tail_integral(traj.times, Rtn, floor * scale)
    iD, qD, okD = _tail_integral(traj.times, dec, 0.0)
    notes = []
    for name, ok, q in (("residual", okR, qR), ("residual rate", okRt, qRt), ("decay", okD, qD)):
        if not ok:
            notes.append(f"TailFitInconclusive: {name} tail exponent q = {q:.3f} <= 1")
    return ResidualReport(list(traj.times), Rn, Rtn, dec, iR, iRt, iD, qR, qRt, qD,
                          bool(okR and okRt and okD), notes)
