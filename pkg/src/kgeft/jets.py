"""Time-derivative jets of fields at a fixed time and their algebra.

A jet of order J stores (f, d_t f, ..., d_t^J f) at one instant.  Products
follow the Leibniz rule, the d'Alembertian acts as (box F)_k = -F_{k+2} + Lap F_k,
and spatial derivatives are spectral.  All products are evaluated in physical
space and then projected onto the 2/3-rule band.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import GridMismatch, InsufficientJetDepth
from .grid import FOURIER, PHYSICAL, Field, GridSpec, fourier_array, physical_array


def dealiased(grid: GridSpec, values):
    """Project a physical-space array onto the 2/3-rule band."""
    return physical_array(grid, fourier_array(grid, values) * grid.dealias_mask)


@dataclass(frozen=True, eq=False)
class JetField:
    """Jets (f_0, ..., f_J) of one field, stored as physical-space arrays."""

    grid: GridSpec
    arrays: tuple

    def __post_init__(self):
        arrs = tuple(np.asarray(a, dtype=np.complex128) for a in self.arrays)
        if not arrs:
            raise ValueError("a jet needs at least one entry")
        for a in arrs:
            if a.shape != self.grid.shape:
                raise GridMismatch(f"jet entry shape {a.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "arrays", arrs)

    @classmethod
    def from_fields(cls, fields):
        fields = list(fields)
        grid = fields[0].grid
        for f in fields[1:]:
            if f.grid != grid:
                raise GridMismatch("jet entries live on different grids")
        return cls(grid, tuple(f.physical() for f in fields))

    @classmethod
    def constant(cls, grid, c, order):
        arrs = [np.full(grid.shape, c, dtype=np.complex128)] + [np.zeros(grid.shape, np.complex128)] * order
        return cls(grid, tuple(arrs))

    @property
    def order(self):
        return len(self.arrays) - 1

    @property
    def jets(self):
        return [Field(self.grid, a, PHYSICAL) for a in self.arrays]

    def __getitem__(self, k):
        return self.arrays[k]

    def truncate(self, order):
        if order > self.order:
            raise InsufficientJetDepth(f"need order {order}, have {self.order}")
        return JetField(self.grid, self.arrays[: order + 1])

    def shift(self, by=1):
        """Jets of d_t^by f."""
        if by > self.order:
            raise InsufficientJetDepth(f"cannot shift order-{self.order} jet by {by}")
        return JetField(self.grid, self.arrays[by:])

    def scale(self, c):
        return JetField(self.grid, tuple(c * a for a in self.arrays))

    def __add__(self, other):
        _check(self, other)
        m = min(self.order, other.order)
        return JetField(self.grid, tuple(self.arrays[k] + other.arrays[k] for k in range(m + 1)))

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def __neg__(self):
        return self.scale(-1.0)

    def taylor(self, t):
        """Evaluate sum_k f_k t^k / k! (physical array)."""
        out = np.zeros(self.grid.shape, dtype=np.complex128)
        fact = 1.0
        for k, a in enumerate(self.arrays):
            if k:
                fact *= k
            out = out + a * (t**k / fact)
        return out


def _check(a, b):
    if a.grid != b.grid:
        raise GridMismatch(f"jet grids differ: {a.grid} vs {b.grid}")


def jet_multiply(a: JetField, b: JetField) -> JetField:
    """Leibniz product of two jets; the order is the smaller of the two."""
    _check(a, b)
    m = min(a.order, b.order)
    out = []
    for k in range(m + 1):
        acc = np.zeros(a.grid.shape, dtype=np.complex128)
        for j in range(k + 1):
            acc = acc + comb(k, j) * (a.arrays[j] * b.arrays[k - j])
        out.append(dealiased(a.grid, acc))
    return JetField(a.grid, tuple(out))


def jet_power(a: JetField, p: int) -> JetField:
    """a**p by repeated Leibniz products."""
    if p < 1:
        raise ValueError("power must be >= 1")
    out = a
    for _ in range(p - 1):
        out = jet_multiply(out, a)
    return out


def spectral_gradient(grid: GridSpec, values):
    """List of d/dx_i of a physical-space array."""
    fh = fourier_array(grid, values)
    return [physical_array(grid, 1j * r * fh) for r in grid.rho]


def spectral_laplacian(grid: GridSpec, values):
    return physical_array(grid, -grid.rho_sq * fourier_array(grid, values))


def jet_gradient(a: JetField):
    """Per-axis jets of the spatial gradient."""
    per_axis = [[] for _ in range(a.grid.dim)]
    for arr in a.arrays:
        for ax, g in enumerate(spectral_gradient(a.grid, arr)):
            per_axis[ax].append(g)
    return [JetField(a.grid, tuple(p)) for p in per_axis]


def jet_laplacian(a: JetField) -> JetField:
    return JetField(a.grid, tuple(spectral_laplacian(a.grid, arr) for arr in a.arrays))


def jet_box(a: JetField) -> JetField:
    """(box F)_k = -F_{k+2} + Lap F_k with box = -d_t^2 + Lap; order drops by two."""
    if a.order < 2:
        raise InsufficientJetDepth("box needs jets of order >= 2")
    lap = [spectral_laplacian(a.grid, a.arrays[k]) for k in range(a.order - 1)]
    return JetField(a.grid, tuple(-a.arrays[k + 2] + lap[k] for k in range(a.order - 1)))


def jet_lorentz_dot(a: JetField, b: JetField) -> JetField:
    """Jets of da.db = -a_t b_t + grad a . grad b; order drops by one."""
    _check(a, b)
    if a.order < 1 or b.order < 1:
        raise InsufficientJetDepth("the Lorentz product needs first time derivatives")
    out = -jet_multiply(a.shift(1), b.shift(1))
    ga = jet_gradient(a)
    gb = ga if b is a else jet_gradient(b)
    m = out.order
    for x, y in zip(ga, gb):
        out = out + jet_multiply(x.truncate(m), y.truncate(m))
    return out
