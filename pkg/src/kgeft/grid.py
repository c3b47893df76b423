"""Periodic grids, spectral transforms, Bessel potentials and norms.

The whole space is replaced by the box [-L/2, L/2)^d with n points per axis.
Fourier data use the continuum normalisation

    f_hat(rho) = dx^d * sum_j f(x_j) exp(-i rho . x_j),   rho = 2 pi k / L,

so that discrete norms approach their whole-space values as the grid refines.
Arrays are stored in numpy's FFT ordering (k = 0, 1, ..., -1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatch, UnsupportedWeight

PHYSICAL = "physical"
FOURIER = "fourier"


@dataclass(frozen=True)
class GridSpec:
    """Periodic box of side ``L`` with ``n`` points per axis in ``dim`` dimensions."""

    dim: int
    n: int
    L: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def dx(self):
        return self.L / self.n

    @property
    def cell_volume(self):
        return self.dx**self.dim

    @cached_property
    def x1d(self):
        return -self.L / 2 + self.dx * np.arange(self.n)

    @cached_property
    def k1d(self):
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def rho1d(self):
        return 2 * np.pi * self.k1d / self.L

    @cached_property
    def x(self):
        """Sparse broadcastable coordinate arrays, one per axis."""
        return tuple(np.meshgrid(*([self.x1d] * self.dim), indexing="ij", sparse=True))

    @cached_property
    def rho(self):
        """Sparse broadcastable frequency arrays, one per axis."""
        return tuple(np.meshgrid(*([self.rho1d] * self.dim), indexing="ij", sparse=True))

    @cached_property
    def rho_sq(self):
        out = np.zeros(self.shape)
        for r in self.rho:
            out = out + r**2
        return out

    @cached_property
    def radius(self):
        r2 = np.zeros(self.shape)
        for xi in self.x:
            r2 = r2 + xi**2
        return np.sqrt(r2)

    @cached_property
    def phase(self):
        """(-1)^(k_1 + ... + k_d), the factor exp(-i rho x_0) from the centred origin."""
        k = self.k1d.astype(np.int64)
        s1 = np.where(k % 2 == 0, 1.0, -1.0)
        out = np.ones(self.shape)
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out = out * s1.reshape(shape)
        return out

    @cached_property
    def dealias_mask(self):
        """2/3-rule mask: keep |k_i| <= n/3 on every axis."""
        keep = np.abs(self.k1d) <= self.n / 3
        out = np.ones(self.shape, dtype=bool)
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out = out & keep.reshape(shape)
        return out

    def japanese(self, mass):
        """<rho>_m = sqrt(|rho|^2 + m^2) on the lattice."""
        return np.sqrt(self.rho_sq + mass**2)

    @property
    def rho_max(self):
        return float(np.sqrt(self.dim) * np.pi / self.dx)

    def to_dict(self):
        return {"dim": self.dim, "n": self.n, "L": self.L}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["dim"]), int(d["n"]), float(d["L"]))


def fourier_array(grid: GridSpec, values):
    """Continuum-normalised forward transform of a physical-space array."""
    return sfft.fftn(values, axes=tuple(range(grid.dim))) * (grid.cell_volume * grid.phase)


def physical_array(grid: GridSpec, values):
    """Inverse of :func:`fourier_array`."""
    return sfft.ifftn(values * grid.phase, axes=tuple(range(grid.dim))) / grid.cell_volume


def reflect_array(grid: GridSpec, values):
    """Return a(-rho) given a(rho) on the lattice (index map k -> -k mod n)."""
    out = values
    for ax in range(grid.dim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples on a grid, either in physical or Fourier space.

    The array is copied and frozen on construction.  ``real`` marks fields
    that represent real-valued functions.
    """

    grid: GridSpec
    values: np.ndarray
    space: str = PHYSICAL
    real: bool = False
    name: str = ""

    def __post_init__(self):
        if self.space not in (PHYSICAL, FOURIER):
            raise ValueError(f"unknown space {self.space!r}")
        arr = np.array(self.values, dtype=np.complex128)
        if arr.shape != self.grid.shape:
            raise GridMismatch(f"array shape {arr.shape} does not match grid {self.grid.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls, grid, space=PHYSICAL, real=True, name=""):
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), space, real, name)

    @classmethod
    def from_function(cls, grid, fn, real=None, name=""):
        """Sample ``fn(*x)`` on the grid; ``x`` are the sparse coordinate arrays."""
        vals = np.broadcast_to(np.asarray(fn(*grid.x)), grid.shape)
        if real is None:
            real = not np.iscomplexobj(vals)
        return cls(grid, vals, PHYSICAL, real, name)

    def physical(self):
        """Physical-space samples as an array."""
        if self.space == PHYSICAL:
            return self.values
        return physical_array(self.grid, self.values)

    def fourier(self):
        """Fourier coefficients as an array."""
        if self.space == FOURIER:
            return self.values
        return fourier_array(self.grid, self.values)

    def with_values(self, values, space=None, real=None):
        return Field(
            self.grid,
            values,
            self.space if space is None else space,
            self.real if real is None else real,
            self.name,
        )

    def __add__(self, other):
        check_same_grid(self, other)
        return self.with_values(self.values + _in_space(other, self.space), real=self.real and other.real)

    def __sub__(self, other):
        check_same_grid(self, other)
        return self.with_values(self.values - _in_space(other, self.space), real=self.real and other.real)

    def __mul__(self, c):
        if isinstance(c, Field):
            raise TypeError("use jets.jet_multiply or pointwise_product for field products")
        return self.with_values(self.values * c, real=self.real and np.isrealobj(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _in_space(f: Field, space):
    return f.physical() if space == PHYSICAL else f.fourier()


def check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"grid {f.grid} differs from {g}")
    return g


def transform(f: Field, target: str) -> Field:
    """Return ``f`` represented in ``target`` space."""
    if target not in (PHYSICAL, FOURIER):
        raise ValueError(f"unknown space {target!r}")
    if target == f.space:
        return f
    vals = f.fourier() if target == FOURIER else f.physical()
    return Field(f.grid, vals, target, f.real, f.name)


def bessel_potential(f: Field, s: float, mass: float = 1.0) -> Field:
    """Apply <D>_m^s, the Fourier multiplier <rho>_m^s, keeping the input's space."""
    if mass < 0:
        raise ValueError("mass must be non-negative")
    mult = f.grid.japanese(mass) ** s
    out = Field(f.grid, f.fourier() * mult, FOURIER, f.real, f.name)
    return transform(out, f.space)


def dealias(f: Field) -> Field:
    """Zero every mode outside the 2/3-rule band, keeping the input's space."""
    out = Field(f.grid, f.fourier() * f.grid.dealias_mask, FOURIER, f.real, f.name)
    return transform(out, f.space)


def is_hermitian(f: Field, tol=1e-12):
    """True when the Fourier data satisfy f_hat(-rho) = conj(f_hat(rho))."""
    fh = f.fourier()
    scale = max(np.max(np.abs(fh)), 1e-300)
    return np.max(np.abs(fh - np.conj(reflect_array(f.grid, fh)))) <= tol * scale


@dataclass(frozen=True)
class NormSpec:
    """Which norm to evaluate.

    ``kind`` is ``"Hs"`` (L^2 norm of <D>^s f), ``"Wkp"`` (L^p norm of <D>^k f)
    or ``"weightedHs"`` (H^s norm of x f).  ``regularity`` is s or k; ``p`` is
    only used by ``Wkp``.  ``mass`` selects the Bessel weight <rho>_m.
    """

    kind: str
    regularity: float = 0.0
    p: float = 2.0
    mass: float = 1.0

    def __post_init__(self):
        if self.kind not in ("Hs", "Wkp", "weightedHs"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if not np.isfinite(self.regularity) or self.regularity < 0:
            raise ValueError("regularity must be finite and non-negative")
        if not (self.p >= 1):
            raise ValueError("Lebesgue exponent must lie in [1, inf]")


SUPPORT_THRESHOLD = 1e-10


def support_in_central_half(values, grid: GridSpec, threshold=SUPPORT_THRESHOLD):
    """True when |values| outside the central half-box is below threshold * max."""
    a = np.abs(values)
    peak = a.max() if a.size else 0.0
    if peak == 0:
        return True
    outside = np.zeros(grid.shape, dtype=bool)
    for xi in grid.x:
        outside = outside | (np.abs(xi) >= grid.L / 4)
    return a[outside].max(initial=0.0) <= threshold * peak


def _hs_from_fourier(grid, fh, s, mass):
    w = grid.japanese(mass) ** s if s != 0 else 1.0
    return float(np.sqrt(np.sum(np.abs(fh * w) ** 2) / grid.L**grid.dim))


def lp_quadrature(grid: GridSpec, values, p):
    """Riemann-sum L^p norm; p = inf gives the largest sample."""
    a = np.abs(values)
    if np.isinf(p):
        return float(a.max())
    top = a.max()
    if top == 0:
        return 0.0
    return float(top * (np.sum((a / top) ** p) * grid.cell_volume) ** (1.0 / p))


def norm(f: Field, spec: NormSpec) -> float:
    """Evaluate ``spec`` on ``f``."""
    g = f.grid
    if spec.kind == "Hs":
        return _hs_from_fourier(g, f.fourier(), spec.regularity, spec.mass)
    if spec.kind == "Wkp":
        if spec.regularity == 0:
            vals = f.physical()
        else:
            vals = physical_array(g, f.fourier() * g.japanese(spec.mass) ** spec.regularity)
        return lp_quadrature(g, vals, spec.p)
    vals = f.physical()
    if not support_in_central_half(vals, g):
        raise UnsupportedWeight("field reaches the outer half of the box")
    total = 0.0
    for xi in g.x:
        total += _hs_from_fourier(g, fourier_array(g, xi * vals), spec.regularity, spec.mass) ** 2
    return float(np.sqrt(total))


def hs_norm(f: Field, s: float, mass: float = 1.0) -> float:
    return norm(f, NormSpec("Hs", s, 2.0, mass))


def l2_physical(f: Field) -> float:
    """L^2 norm by physical-space quadrature (the other side of Parseval)."""
    return lp_quadrature(f.grid, f.physical(), 2.0)


def random_bandlimited(grid: GridSpec, rng, band=1.0 / 3.0, real=True, decay=0.0):
    """Random field whose modes satisfy |k_i| <= band * n on every axis.

    ``decay`` damps coefficients by <k>^-decay so high modes are smaller.
    """
    shape = grid.shape
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    keep = np.ones(shape, dtype=bool)
    ksq = np.zeros(shape)
    for ax in range(grid.dim):
        s = [1] * grid.dim
        s[ax] = grid.n
        kk = grid.k1d.reshape(s)
        keep = keep & (np.abs(kk) <= band * grid.n)
        ksq = ksq + kk**2
    coef = coef * keep * (1.0 + ksq) ** (-decay / 2)
    vals = sfft.ifftn(coef, axes=tuple(range(grid.dim))) * grid.n**grid.dim
    if real:
        vals = vals.real
    return Field(grid, vals, PHYSICAL, real)


def gaussian_field(grid: GridSpec, amplitude=1.0, width=1.0, center=None, velocity_sign=0):
    """Real Gaussian bump amplitude * exp(-|x - c|^2 / (2 width^2))."""
    c = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    r2 = np.zeros(grid.shape)
    for ax, xi in enumerate(grid.x):
        r2 = r2 + (xi - c[ax]) ** 2
    return Field(grid, amplitude * np.exp(-r2 / (2 * width**2)), PHYSICAL, True)


def gaussian_support_radius(width, center_norm=0.0, threshold=SUPPORT_THRESHOLD):
    """Radius beyond which a Gaussian falls below ``threshold`` of its peak."""
    return float(center_norm + width * np.sqrt(2 * np.log(1.0 / threshold)))


# ---------------------------------------------------------------- snapshots


@dataclass
class SnapshotHeader:
    grid: GridSpec
    space: str
    time: float
    name: str
    real: bool = False
    extra: dict = dc_field(default_factory=dict)


def write_fld(path, f: Field, time=0.0, name=None, extra=None):
    """Write a ``.fld`` snapshot: one JSON header line, then little-endian (re, im) float64 pairs."""
    header = {
        "grid": f.grid.to_dict(),
        "space": f.space,
        "time": float(time),
        "name": f.name if name is None else name,
        "real": bool(f.real),
        "dtype": "<f8",
        "order": "C",
    }
    if extra:
        header["extra"] = extra
    path = Path(path)
    data = np.ascontiguousarray(f.values).view(np.float64).astype("<f8")
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(data.tobytes(order="C"))
    return path


def read_fld(path):
    """Read a snapshot written by :func:`write_fld`; returns (Field, SnapshotHeader)."""
    with open(path, "rb") as fh:
        line = fh.readline()
        header = json.loads(line.decode("utf-8"))
        raw = fh.read()
    grid = GridSpec.from_dict(header["grid"])
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    vals = arr.view(np.complex128).reshape(grid.shape)
    f = Field(grid, vals, header["space"], header.get("real", False), header.get("name", ""))
    meta = SnapshotHeader(grid, header["space"], header["time"], header.get("name", ""),
                          header.get("real", False), header.get("extra", {}))
    return f, meta
