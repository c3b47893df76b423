"""Half waves, profiles, free Klein-Gordon flows and decay measurements.

For a field U of mass m the half waves are u_pm = U_t pm i<D>_m U.  Under the
free flow u_pm(t) = exp(pm i <D>_m t) u_pm(0), so the profiles
l_pm = exp(-+ i <D>_m t) u_pm are constant and only the nonlinearity moves them.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy import integrate

from .errors import CausalityBudgetExceeded, QuadratureFailure
from .grid import (
    FOURIER,
    PHYSICAL,
    SUPPORT_THRESHOLD,
    Field,
    NormSpec,
    check_same_grid,
    norm,
    physical_array,
    transform,
)


@dataclass(frozen=True)
class HalfWavePair:
    """u_plus and u_minus of one field at time ``time``."""

    plus: Field
    minus: Field
    mass: float
    time: float = 0.0


@dataclass(frozen=True)
class ProfileSet:
    """Profiles (l_plus, l_minus) of the light field and (h_plus, h_minus) of the heavy one."""

    l_plus: Field
    l_minus: Field
    h_plus: Field
    h_minus: Field
    time: float
    masses: tuple = (1.0, 1.0)

    def entries(self):
        return (self.l_plus, self.l_minus, self.h_plus, self.h_minus)


def to_halfwaves(U: Field, Ut: Field, m: float, time: float = 0.0) -> HalfWavePair:
    """plus = U_t + i<D>_m U, minus = U_t - i<D>_m U (Fourier-space fields)."""
    g = check_same_grid(U, Ut)
    w = 1j * g.japanese(m) * U.fourier()
    ut = Ut.fourier()
    return HalfWavePair(Field(g, ut + w, FOURIER), Field(g, ut - w, FOURIER), m, time)


def from_halfwaves(pair: HalfWavePair):
    """Invert :func:`to_halfwaves`: U = (plus - minus)/(2i<D>), U_t = (plus + minus)/2."""
    g = check_same_grid(pair.plus, pair.minus)
    p, q = pair.plus.fourier(), pair.minus.fourier()
    U = (p - q) / (2j * g.japanese(pair.mass))
    Ut = (p + q) / 2
    return Field(g, U, FOURIER), Field(g, Ut, FOURIER)


def linear_flow(w: Field, m: float, sign: int, t: float) -> Field:
    """Apply the multiplier exp(sign * i <rho>_m t), returning a field in w's space."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    g = w.grid
    out = Field(g, w.fourier() * np.exp(sign * 1j * g.japanese(m) * t), FOURIER, False, w.name)
    return transform(out, w.space)


def profiles_from_halfwaves(light: HalfWavePair, heavy: HalfWavePair) -> ProfileSet:
    """l_pm = exp(-+ i<D> t) u_pm and h_pm = exp(-+ i<D>_M t) v_pm."""
    t = light.time
    return ProfileSet(
        linear_flow(light.plus, light.mass, -1, t),
        linear_flow(light.minus, light.mass, +1, t),
        linear_flow(heavy.plus, heavy.mass, -1, t),
        linear_flow(heavy.minus, heavy.mass, +1, t),
        t,
        (light.mass, heavy.mass),
    )


# ------------------------------------------------------------------ fits


@dataclass
class ExponentFit:
    """Least-squares fit log y = intercept + slope * log x."""

    slope: float
    intercept: float
    residual: float
    window: tuple
    samples: list = dc_field(default_factory=list)
    stderr: float = float("nan")

    def to_json(self):
        d = asdict(self)
        d["window"] = list(self.window)
        d["samples"] = [list(map(float, s)) for s in self.samples]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["window"] = tuple(d["window"])
        d["samples"] = [tuple(s) for s in d["samples"]]
        return cls(**d)

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_power_law(x, y, window=(0.0, np.inf)) -> ExponentFit:
    """Fit y ~ A x^slope on samples with window[0] <= x <= window[1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sel = (x >= window[0]) & (x <= window[1]) & (y > 0) & np.isfinite(y)
    samples = list(zip(x.tolist(), y.tolist()))
    if sel.sum() < 2:
        return ExponentFit(float("nan"), float("nan"), float("nan"), tuple(window), samples)
    lx, ly = np.log(x[sel]), np.log(y[sel])
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - A @ coef
    rms = float(np.sqrt(np.mean(res**2)))
    dof = sel.sum() - 2
    if dof > 0:
        s2 = float(res @ res) / dof
        var = s2 / float(np.sum((lx - lx.mean()) ** 2))
        stderr = float(np.sqrt(var))
    else:
        stderr = 0.0
    return ExponentFit(float(coef[0]), float(coef[1]), rms, tuple(map(float, window)), samples, stderr)


# ------------------------------------------------------------------ decay


def support_radius(*fields, threshold=SUPPORT_THRESHOLD):
    """Largest |x| at which any field exceeds threshold times the largest peak of all fields."""
    arrs = [np.abs(f.physical()) for f in fields]
    peak = max((a.max() for a in arrs), default=0.0)
    if peak == 0:
        return 0.0
    R = 0.0
    for f, a in zip(fields, arrs):
        mask = a > threshold * peak
        if mask.any():
            R = max(R, float(f.grid.radius[mask].max()))
    return R


def check_causality(L, R, T):
    if L < 2 * (R + T):
        raise CausalityBudgetExceeded(f"box length {L} < 2(R + T) = {2 * (R + T)}")


def free_halfwave_norms(U0: Field, U1: Field, m: float, times, spec: NormSpec):
    """Norms of u_plus(t) = exp(i<D>_m t)(U1 + i<D>_m U0) at each requested time."""
    pair = to_halfwaves(U0, U1, m)
    g = U0.grid
    w = g.japanese(m)
    mult = w**spec.regularity if spec.regularity else 1.0
    base = pair.plus.fourier() * mult
    out = []
    for t in times:
        vals = physical_array(g, base * np.exp(1j * w * t))
        if spec.kind == "Hs":
            out.append(norm(Field(g, vals), NormSpec("Hs", 0.0)))
        else:
            out.append(norm(Field(g, vals), NormSpec("Wkp", 0.0, spec.p)))
    return np.array(out)


def measure_decay(U0: Field, U1: Field, m: float, times, p: float, k: float = 0.0,
                  window=None) -> ExponentFit:
    """Fit the power-law decay of the free half wave in W^{k,p}.

    The default window keeps t > 2m, where the asymptotic rate d(1/2 - 1/p)
    applies.  Raises CausalityBudgetExceeded if the box is too small for max(times).
    """
    times = np.asarray(times, dtype=float)
    R = support_radius(U0, U1)
    check_causality(U0.grid.L, R, float(times.max()))
    vals = free_halfwave_norms(U0, U1, m, times, NormSpec("Wkp", k, p))
    if window is None:
        window = (2.0 * m, np.inf)
    return fit_power_law(times, vals, window)


def crossover_time(times, values, plateau_window, tail_window):
    """Time where the plateau level meets the asymptotic power-law fit."""
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    sel = (times >= plateau_window[0]) & (times <= plateau_window[1])
    level = float(np.mean(values[sel]))
    fit = fit_power_law(times, values, tail_window)
    return float((level / np.exp(fit.intercept)) ** (1.0 / fit.slope)), level, fit


# ------------------------------------------------------- integral estimates


def _jp(x):
    return np.sqrt(1.0 + x * x)


def _quad(fun, a, b, points):
    if b <= a:
        return 0.0
    pts = [p for p in points if a < p < b]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fun, a, b, points=pts or None, limit=400,
                                      epsabs=0.0, epsrel=1e-9)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    return val


def envelope_independent(alpha, beta, t):
    """Claimed bound for int_1^t s^-alpha <t-s>^-beta ds, or None at borderline exponents."""
    if alpha < 1 and beta < 1:
        return t ** (1 - alpha - beta), "alpha,beta<1"
    if beta > alpha and beta > 1:
        return t ** (-alpha), "beta>alpha,1"
    if alpha > beta and alpha > 1:
        return t ** (-beta), "alpha>beta,1"
    if alpha == beta and alpha > 1:
        return t ** (-alpha), "alpha=beta>1"
    return None, "borderline"


def envelope_dependent(alpha, beta, M, t, literal=True):
    """Claimed bound for int_1^t s^-alpha <(t-s)/M>^-beta ds.

    ``literal=False`` drops the prefactor M^min(1-alpha,0), which is not
    uniform in M when alpha > 1 (see the report's ``dependent_sup_ratio``).
    """
    pref = M ** min(1 - alpha, 0) if literal else 1.0
    jt = _jp(t / M)
    if alpha < 1 and beta < 1:
        return pref * t ** (1 - alpha) * jt ** (-beta), "alpha,beta<1"
    if alpha > beta and alpha > 1:
        return pref * jt ** (-beta), "alpha>beta,1"
    if beta > alpha and beta > 1:
        return pref * max(jt ** (-beta), jt ** (-1) * t ** (1 - alpha)), "beta>alpha,1"
    if alpha == beta and alpha > 1:
        return pref * jt ** (-beta), "alpha=beta>1"
    return None, "borderline"


@dataclass
class IntegralEstimateReport:
    alpha: float
    beta: float
    M: float
    t_grid: list
    independent_values: list
    independent_ratios: list
    independent_sup_ratio: float
    dependent_values: list
    dependent_ratios: list
    dependent_sup_ratio: float
    dependent_ratios_unit_prefactor: list
    dependent_sup_ratio_unit_prefactor: float
    case: str


def integral_independent(alpha, beta, t):
    return _quad(lambda s: s ** (-alpha) * _jp(t - s) ** (-beta), 1.0, t, [t - 1.0, t - 10.0])


def integral_dependent(alpha, beta, M, t):
    return _quad(lambda s: s ** (-alpha) * _jp((t - s) / M) ** (-beta), 1.0, t, [t - M, t - 10.0 * M])


def verify_integral_estimates(alpha, beta, M, t_grid) -> IntegralEstimateReport:
    """Evaluate both time integrals by adaptive quadrature and divide by the claimed envelopes."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    iv, ir, dv, dr, du = [], [], [], [], []
    case = "borderline"
    for t in t_grid:
        t = float(t)
        a = integral_independent(alpha, beta, t)
        b = integral_dependent(alpha, beta, M, t)
        env, case = envelope_independent(alpha, beta, t)
        envd, _ = envelope_dependent(alpha, beta, M, t, True)
        envu, _ = envelope_dependent(alpha, beta, M, t, False)
        iv.append(a)
        dv.append(b)
        ir.append(a / env if env else float("nan"))
        dr.append(b / envd if envd else float("nan"))
        du.append(b / envu if envu else float("nan"))

    def sup(x):
        x = np.asarray(x, float)
        return float(np.nanmax(x)) if np.any(np.isfinite(x)) else float("nan")

    return IntegralEstimateReport(alpha, beta, M, list(map(float, t_grid)), iv, ir, sup(ir),
                                  dv, dr, sup(dr), du, sup(du), case)
