"""Phases, resonance geometry, cutoffs and bilinear Fourier multipliers.

Phases are phi(rho, nu) = e0 <rho>_m0 + e1 <nu>_m1 + e2 <rho - nu>_m2 evaluated on
arrays whose last axis holds the d components of a frequency.  For the light
equation the only sign pattern that can vanish is (+, -, +) with masses
(1, M, 1); its nu-gradient vanishes only at nu* = rho M / (M - 1).

The space/time partition uses the exp-based smooth step.  Its widths scale
with sqrt(M) around nu*, which is the distance from nu* to {phi = 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import optimize

from .errors import (
    GridTooLarge,
    InvalidHolderTriple,
    MinimizationFailed,
    StencilOutOfRange,
    SupportSamplingEmpty,
)
from .grid import FOURIER, Field, NormSpec, check_same_grid, norm, physical_array
from .propagators import ExponentFit, fit_power_law


def _vec(x):
    """Frequencies as an array with the components on the last axis."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    return a


def _jp(x, m):
    return np.sqrt(np.sum(x * x, axis=-1) + m * m)


@dataclass(frozen=True)
class PhaseSpec:
    """Signs (e0, e1, e2) and masses (m0, m1, m2) of a three-wave phase."""

    signs: tuple
    masses: tuple
    M: float

    def __post_init__(self):
        if any(s not in (1, -1) for s in self.signs) or len(self.signs) != 3:
            raise ValueError("signs must be three entries of +1 or -1")
        if len(self.masses) != 3 or any(m < 1 for m in self.masses):
            raise ValueError("masses must be three values >= 1")

    @property
    def is_u_resonant(self):
        return tuple(self.signs) == (1, -1, 1) and tuple(self.masses) == (1.0, self.M, 1.0)

    @property
    def label(self):
        return "".join("+" if s > 0 else "-" for s in self.signs)


def phase_u(M, signs=(1, -1, 1)):
    """Light-equation phase: masses (1, M, 1)."""
    return PhaseSpec(tuple(signs), (1.0, float(M), 1.0), float(M))


def phase_v(M, signs=(-1, 1, 1)):
    """Heavy-equation phase: masses (M, 1, 1)."""
    return PhaseSpec(tuple(signs), (float(M), 1.0, 1.0), float(M))


def parse_signs(text):
    if len(text) != 3 or any(c not in "+-" for c in text):
        raise ValueError(f"signs must look like '+-+', got {text!r}")
    return tuple(1 if c == "+" else -1 for c in text)


def phase_eval(spec: PhaseSpec, rho, nu):
    """phi(rho, nu), broadcasting over leading axes."""
    rho, nu = _vec(rho), _vec(nu)
    e0, e1, e2 = spec.signs
    m0, m1, m2 = spec.masses
    return e0 * _jp(rho, m0) + e1 * _jp(nu, m1) + e2 * _jp(rho - nu, m2)


def grad_phase_eval(spec: PhaseSpec, rho, nu):
    """Gradient of phi in nu at fixed rho."""
    rho, nu = _vec(rho), _vec(nu)
    _, e1, e2 = spec.signs
    _, m1, m2 = spec.masses
    a = rho - nu
    return e1 * nu / _jp(nu, m1)[..., None] - e2 * a / _jp(a, m2)[..., None]


def space_resonance_point(spec: PhaseSpec, rho):
    """nu* = rho M/(M - 1), where the nu-gradient of the (+,-,+) light phase vanishes."""
    if not spec.is_u_resonant:
        raise ValueError("space resonance point is defined for the (+,-,+) light phase")
    M = spec.M
    return _vec(rho) * (M / (M - 1.0))


# ---------------------------------------------------------------- cutoffs


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    s = 1.0 - t
    b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


def bump(x):
    """chi(x) = 1 for |x| <= 1, 0 for |x| >= 2, smooth and monotone in between."""
    return smooth_step(2.0 - np.abs(np.asarray(x, dtype=float)))


def _split(rho, nu):
    """Parallel and perpendicular parts of nu relative to rho (e_1 when rho = 0)."""
    r = np.sqrt(np.sum(rho * rho, axis=-1))
    d = rho.shape[-1]
    e1 = np.zeros(d)
    e1[0] = 1.0
    safe = np.where(r > 0, r, 1.0)[..., None]
    unit = np.where(r[..., None] > 0, rho / safe, e1)
    par = np.sum(nu * unit, axis=-1)
    perp_vec = nu - par[..., None] * unit
    perp = np.sqrt(np.sum(perp_vec * perp_vec, axis=-1))
    return r, par, perp


@dataclass(frozen=True)
class CutoffPartition:
    """chi_S + chi_T = 1 separating the space- and time-resonant regions of the light phase.

    chi_S = chi(|rho|) chi(|nu - nu*|/w)
            + (1 - chi(|rho|)) chi(|nu_perp|/w) chi(|nu_par - |nu*|| * 4/<rho/M>)

    with w = width_factor * sqrt(M).  chi_T is evaluated from the complementary
    products so that chi_T(rho, nu*) = 0 holds exactly.
    """

    phase: PhaseSpec
    width_factor: float = 0.25

    def __post_init__(self):
        if not self.phase.is_u_resonant:
            raise ValueError("the partition is built for the (+,-,+) light phase")

    @property
    def width(self):
        return self.width_factor * math.sqrt(self.phase.M)

    def _pieces(self, rho, nu):
        rho, nu = _vec(rho), _vec(nu)
        M = self.phase.M
        star = rho * (M / (M - 1.0))
        r, par, perp = _split(rho, nu)
        w = self.width
        c_rho = bump(r)
        dist = np.sqrt(np.sum((nu - star) ** 2, axis=-1))
        ball = bump(dist / w)
        jr = np.sqrt(1.0 + (r / M) ** 2)
        tube = bump(perp / w) * bump(np.abs(par - r * M / (M - 1.0)) * 4.0 / jr)
        return c_rho, ball, tube

    def chi_S(self, rho, nu):
        c, ball, tube = self._pieces(rho, nu)
        return c * ball + (1.0 - c) * tube

    def chi_T(self, rho, nu):
        c, ball, tube = self._pieces(rho, nu)
        return c * (1.0 - ball) + (1.0 - c) * (1.0 - tube)


@dataclass
class BoundsReport:
    M: float
    inf_time: float
    inf_space: float
    n_time: int
    n_space: int
    overlap_time: float = float("nan")
    overlap_space: float = float("nan")


def sample_support(partition: CutoffPartition, rho, rng, count):
    """Random nu covering the region where chi_S can be positive for each rho row."""
    rho = _vec(rho)
    M = partition.phase.M
    d = rho.shape[-1]
    w = partition.width
    star = rho * (M / (M - 1.0))
    r = np.sqrt(np.sum(rho * rho, axis=-1))
    jr = np.sqrt(1.0 + (r / M) ** 2)
    reach = np.maximum(2.0 * w, jr / 2.0) * 1.05
    offs = rng.uniform(-1.0, 1.0, size=(rho.shape[0], count, d)) * reach[:, None, None]
    return star[:, None, :] + offs


def verify_lower_bounds(partition: CutoffPartition, rho_samples, rng, nu_per_rho=200,
                        threshold=0.01, far_factor=8.0) -> BoundsReport:
    """Infima of |phi|<rho-nu>/M on {chi_S > threshold} and of
    |grad phi| min(<rho-nu>^2, <nu/M>^2) on {chi_T > threshold}."""
    spec = partition.phase
    M = spec.M
    rho = _vec(rho_samples)
    if rho.ndim == 1:
        rho = rho[:, None]
    nu_near = sample_support(partition, rho, rng, nu_per_rho)
    rr = np.broadcast_to(rho[:, None, :], nu_near.shape)
    # time-resonance side: chi_S support
    cs = partition.chi_S(rr, nu_near)
    sel = cs > threshold
    if not sel.any():
        raise SupportSamplingEmpty("no sample landed in supp chi_S")
    a = rr - nu_near
    q_time = np.abs(phase_eval(spec, rr, nu_near)) * _jp(a, 1.0) / M
    inf_time = float(q_time[sel].min())
    # space-resonance side: chi_T support, sampled near and far
    star = rho * (M / (M - 1.0))
    far = star[:, None, :] + rng.uniform(-1, 1, size=nu_near.shape) * far_factor * max(M, 1.0)
    nus = np.concatenate([nu_near, far], axis=1)
    rr2 = np.broadcast_to(rho[:, None, :], nus.shape)
    ct = partition.chi_T(rr2, nus)
    sel2 = ct > threshold
    if not sel2.any():
        raise SupportSamplingEmpty("no sample landed in supp chi_T")
    gnorm = np.sqrt(np.sum(grad_phase_eval(spec, rr2, nus) ** 2, axis=-1))
    weight = np.minimum(_jp(rr2 - nus, 1.0) ** 2, _jp(nus / M, 1.0) ** 2)
    q_space = gnorm * weight
    inf_space = float(q_space[sel2].min())
    both = sel2 & (partition.chi_S(rr2, nus) > threshold)
    ov_t = float(q_time.min()) if both.any() else float("nan")
    return BoundsReport(M, inf_time, inf_space, int(sel.sum()), int(sel2.sum()), ov_t,
                        float(q_space[both].min()) if both.any() else float("nan"))


# ------------------------------------------------------------- separation


@dataclass
class SeparationReport:
    fit: ExponentFit
    per_M: dict = dc_field(default_factory=dict)


def _cyl_phase(spec, rnorm, a, b):
    """phi for rho = (rnorm, 0) and nu = (a, b) using the cylindrical reduction."""
    rho = np.array([rnorm, 0.0])
    return float(phase_eval(spec, rho, np.array([a, b])))


def min_distance_to_time_resonance(spec: PhaseSpec, rho_norm: float, seeds: int = 9, tol=1e-10):
    """min |nu - nu*| over {phi_u = 0} via constrained descent in (nu_par, |nu_perp|)."""
    M = spec.M
    a_star = rho_norm * M / (M - 1.0)
    f = lambda z: _cyl_phase(spec, rho_norm, z[0], z[1])
    starts = []
    for th in np.linspace(0.0, np.pi, seeds):
        direction = np.array([math.cos(th), math.sin(th)])
        g = lambda s: f(np.array([a_star, 0.0]) + s * direction)
        hi = 1.0
        while g(hi) < 0 and hi < 1e8:
            hi *= 2.0
        if g(hi) < 0:
            continue
        s0 = optimize.brentq(g, 0.0, hi, xtol=1e-13)
        starts.append(np.array([a_star, 0.0]) + s0 * direction)
    best = None
    for z0 in starts:
        res = optimize.minimize(
            lambda z: (z[0] - a_star) ** 2 + z[1] ** 2,
            z0,
            jac=lambda z: np.array([2 * (z[0] - a_star), 2 * z[1]]),
            method="SLSQP",
            constraints=[{"type": "eq", "fun": f}],
            bounds=[(None, None), (0.0, None)],
            options={"ftol": tol, "maxiter": 500},
        )
        if res.success and abs(f(res.x)) < 1e-6 * max(1.0, M):
            d = math.hypot(res.x[0] - a_star, res.x[1])
            if best is None or d < best:
                best = d
    if best is None:
        raise MinimizationFailed(f"no seed converged for M = {M}, |rho| = {rho_norm}")
    return best


def verify_separation(M_list, rho_samples, signs=(1, -1, 1), seeds=9) -> SeparationReport:
    """Fit log(min distance) against log M, minimising over the given |rho| values."""
    if min(M_list) < 4:
        raise ValueError("separation is checked for M >= 4")
    per = {}
    mins = []
    for M in M_list:
        spec = phase_u(M, signs)
        dists = [min_distance_to_time_resonance(spec, float(np.linalg.norm(_vec(r))), seeds) for r in rho_samples]
        per[float(M)] = dists
        mins.append(min(dists))
    return SeparationReport(fit_power_law(M_list, mins), per)


def polar_scan_distance(spec: PhaseSpec, rho_norm: float, n_angles=721):
    """Oracle: along each ray from nu* in the (nu_par, |nu_perp|) half plane, bracket phi = 0."""
    M = spec.M
    a_star = rho_norm * M / (M - 1.0)
    best = np.inf
    for th in np.linspace(0.0, np.pi, n_angles):
        direction = np.array([math.cos(th), math.sin(th)])
        g = lambda s: _cyl_phase(spec, rho_norm, a_star + s * direction[0], s * direction[1])
        hi = 1.0
        while g(hi) < 0 and hi < 1e8:
            hi *= 2.0
        best = min(best, optimize.brentq(g, 0.0, hi, xtol=1e-12))
    return best


# ---------------------------------------------------------------- symbols


@dataclass(frozen=True)
class BilinearSymbol:
    """A multiplier m(nu1, nu2); the output frequency is rho = nu1 + nu2."""

    evaluator: object
    descriptor: str = "custom"
    M: float = float("nan")
    singular_set: object = None

    def __call__(self, nu1, nu2):
        return self.evaluator(_vec(nu1), _vec(nu2))


def symbol_one():
    return BilinearSymbol(lambda n1, n2: np.ones(np.broadcast_shapes(n1.shape, n2.shape)[:-1]), "one")


def symbol_chiS_over_phi(partition: CutoffPartition):
    """chi_S/(i phi) with nu = nu1 and rho - nu = nu2."""
    spec = partition.phase

    def ev(n1, n2):
        rho = n1 + n2
        return partition.chi_S(rho, n1) / (1j * phase_eval(spec, rho, n1))

    return BilinearSymbol(ev, "chiS_over_phi", spec.M)


def symbol_chiT_grad(partition: CutoffPartition, component: int = 0):
    """One component of chi_T grad phi / |grad phi|^2."""
    spec = partition.phase

    def ev(n1, n2):
        rho = n1 + n2
        gr = grad_phase_eval(spec, rho, n1)
        g2 = np.sum(gr * gr, axis=-1)
        ct = partition.chi_T(rho, n1)
        safe = np.where(ct > 0, g2, 1.0)
        return np.where(ct > 0, ct * gr[..., component] / safe, 0.0)

    return BilinearSymbol(ev, "chiT_gradphi_over_gradphisq", spec.M)


def symbol_indicator(grid, k1, k2):
    """Indicator of one lattice pair, given as integer wave-vectors."""
    r1 = np.asarray(k1, float) * 2 * np.pi / grid.L
    r2 = np.asarray(k2, float) * 2 * np.pi / grid.L

    def ev(n1, n2):
        h = np.pi / grid.L
        hit1 = np.all(np.abs(n1 - r1) < h, axis=-1)
        hit2 = np.all(np.abs(n2 - r2) < h, axis=-1)
        return (hit1 & hit2).astype(float)

    return BilinearSymbol(ev, "custom")


MAX_PAIRS = 1 << 25


def bilinear_apply(symbol: BilinearSymbol, f: Field, g: Field, chunk=None) -> Field:
    """T_m(f, g) with T_m(f,g)^(rho) = L^-d sum_{nu1 + nu2 = rho} m(nu1, nu2) f^(nu1) g^(nu2).

    The sum runs over all lattice pairs and wraps modulo the lattice, so the
    constant symbol gives exactly the pointwise product on the grid.
    """
    grid = check_same_grid(f, g)
    d, n = grid.dim, grid.n
    total = n ** (2 * d)
    if (d == 1 and n > 512) or (d == 2 and n > 64) or (d == 3 and n > 16) or total > MAX_PAIRS * 8:
        raise GridTooLarge(f"direct bilinear sum on {n}^{d} points is too expensive")
    fh = f.fourier().ravel()
    gh = g.fourier().ravel()
    kk = np.stack(np.meshgrid(*([grid.k1d] * d), indexing="ij"), axis=-1).reshape(-1, d)
    npts = kk.shape[0]
    rho_k = kk * (2 * np.pi / grid.L)
    strides = np.array([n ** (d - 1 - ax) for ax in range(d)])
    idx = np.mod(kk, n).astype(np.int64)
    out = np.zeros(npts, dtype=np.complex128)
    chunk = chunk or max(1, MAX_PAIRS // npts)
    for start in range(0, npts, chunk):
        sl = slice(start, min(start + chunk, npts))
        n1 = rho_k[sl][:, None, :]
        n2 = rho_k[None, :, :]
        m = np.asarray(symbol(n1, n2))
        w = m * fh[sl][:, None] * gh[None, :]
        tgt = np.mod(idx[sl][:, None, :] + idx[None, :, :], n) @ strides
        out += np.bincount(tgt.ravel(), weights=w.real.ravel(), minlength=npts) + 1j * np.bincount(
            tgt.ravel(), weights=w.imag.ravel(), minlength=npts)
    out = out.reshape(grid.shape) / grid.L**d
    return Field(grid, out, FOURIER)


# -------------------------------------------------------- symbolic bounds


@dataclass
class SymbolicReport:
    M: float
    sup_ratio: dict
    samples: int


def symbol_envelope(nu1, nu2, order, direction, M):
    """min(<nu1>,<nu2>)^(2a+1) / (M <nu_k>^a) for derivative order a in nu_k."""
    j1, j2 = _jp(nu1, 1.0), _jp(nu2, 1.0)
    jk = j1 if direction == 1 else j2
    return np.minimum(j1, j2) ** (2 * order + 1) / (M * jk**order)


def finite_difference(symbol: BilinearSymbol, nu1, nu2, order, direction, axis=0):
    """Central difference of order 0..3 along one axis of nu_k, step 1e-3 (1 + |nu_k|)."""
    nu1, nu2 = _vec(nu1), _vec(nu2)
    base = nu1 if direction == 1 else nu2
    h = 1e-3 * (1.0 + np.sqrt(np.sum(base * base, axis=-1)))[..., None]
    e = np.zeros(base.shape[-1])
    e[axis] = 1.0
    stencils = {
        0: [(0, 1.0)],
        1: [(1, 0.5), (-1, -0.5)],
        2: [(1, 1.0), (0, -2.0), (-1, 1.0)],
        3: [(2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)],
    }
    if order not in stencils:
        raise StencilOutOfRange(f"derivative order {order} is not supported")
    acc = 0.0
    for s, c in stencils[order]:
        shift = s * h * e
        a, b = (nu1 + shift, nu2) if direction == 1 else (nu1, nu2 + shift)
        acc = acc + c * np.asarray(symbol(a, b))
    return acc / h[..., 0] ** order


def verify_symbolic_bounds(symbol: BilinearSymbol, nu1, nu2, max_order=3, M=None, support=None):
    """Sup over samples of |d^a_{nu_k} m| / envelope for a <= max_order, k = 1, 2.

    ``support(nu1, nu2)`` returns a mask of admissible samples; every stencil
    point of a kept sample must stay admissible.
    """
    nu1, nu2 = _vec(nu1), _vec(nu2)
    M = symbol.M if M is None else M
    if not np.isfinite(M):
        M = 1.0
    keep = np.ones(nu1.shape[:-1], dtype=bool)
    if support is not None:
        keep = np.asarray(support(nu1, nu2), bool)
        for direction in (1, 2):
            base = nu1 if direction == 1 else nu2
            h = 2e-3 * (1.0 + np.sqrt(np.sum(base * base, axis=-1)))[..., None]
            for s in (-1, 1):
                a, b = (nu1 + s * h, nu2) if direction == 1 else (nu1, nu2 + s * h)
                keep &= np.asarray(support(a, b), bool)
        if not keep.any():
            raise StencilOutOfRange("no sample keeps its stencil inside the admissible region")
    out = {}
    for direction in (1, 2):
        for order in range(max_order + 1):
            deriv = np.abs(finite_difference(symbol, nu1, nu2, order, direction))
            env = symbol_envelope(nu1, nu2, order, direction, M)
            ratio = deriv / env
            out[(order, direction)] = float(np.max(ratio[keep])) if keep.any() else float("nan")
    return SymbolicReport(M, out, int(keep.sum()))


# ---------------------------------------------------------- operator norm


@dataclass
class OperatorNormReport:
    sup_ratio: float
    ratios: list


def _check_holder(r, p, q):
    inv = lambda x: 0.0 if np.isinf(x) else 1.0 / x
    if abs(inv(r) - inv(p) - inv(q)) > 1e-12:
        raise InvalidHolderTriple(f"1/{r} != 1/{p} + 1/{q}")


def estimate_operator_norm(symbol: BilinearSymbol, grid, k: float, r: float, pq: tuple,
                           pq_bar: tuple, a_reg: float, trials: int, rng, band=1.0 / 3.0,
                           decay=0.0, pairs=None) -> OperatorNormReport:
    """max over random pairs of |T_m(f,g)|_{W^{k,r}} divided by
    |f|_{W^{a,p}} |g|_{W^{k,q}} + |f|_{W^{k,pb}} |g|_{W^{a,qb}}."""
    from .grid import random_bandlimited

    p, q = pq
    pb, qb = pq_bar
    _check_holder(r, p, q)
    _check_holder(r, pb, qb)
    W = lambda h, s, e: norm(h, NormSpec("Wkp", s, e))
    ratios = []
    if pairs is None:
        pairs = ((random_bandlimited(grid, rng, band, True, decay),
                  random_bandlimited(grid, rng, band, True, decay)) for _ in range(trials))
    for f, g in pairs:
        T = bilinear_apply(symbol, f, g)
        lhs = W(T, k, r)
        rhs = W(f, a_reg, p) * W(g, k, q) + W(f, k, pb) * W(g, a_reg, qb)
        ratios.append(lhs / rhs if rhs > 0 else 0.0)
    return OperatorNormReport(float(max(ratios)) if ratios else 0.0, ratios)


def adversarial_pair(grid, nu1, nu2, width_modes=2.0):
    """Two real wave packets whose spectra peak at +-nu1 and +-nu2."""
    x = grid.x[0]
    env = np.exp(-(x / (grid.L / (2 * np.pi * width_modes))) ** 2 / 2)
    f = Field(grid, np.cos(nu1 * x) * env, real=True)
    g = Field(grid, np.cos(nu2 * x) * env, real=True)
    return f, g


# ----------------------------------------------------------------- sheets


def resonance_sheet(spec: PhaseSpec, rho_norm: float, extent: float, n: int = 101):
    """Rows (nu_par, nu_perp, phi, |grad phi|, chi_S) on a square around nu*."""
    M = spec.M
    a_star = rho_norm * M / (M - 1.0)
    par = np.linspace(a_star - extent, a_star + extent, n)
    perp = np.linspace(0.0, extent, n // 2 + 1)
    P, Q = np.meshgrid(par, perp, indexing="ij")
    nu = np.stack([P, Q], axis=-1)
    rho = np.broadcast_to(np.array([rho_norm, 0.0]), nu.shape)
    phi = phase_eval(spec, rho, nu)
    gr = np.sqrt(np.sum(grad_phase_eval(spec, rho, nu) ** 2, axis=-1))
    cs = CutoffPartition(spec).chi_S(rho, nu) if spec.is_u_resonant else np.full(P.shape, np.nan)
    return np.column_stack([P.ravel(), Q.ravel(), phi.ravel(), gr.ravel(), cs.ravel()])
