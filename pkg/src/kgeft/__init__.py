"""kgeft: pseudospectral laboratory for a light/heavy Klein-Gordon system.

Modules
-------
grid         periodic grids, transforms, Bessel potentials, norms, snapshots
jets         time-derivative jets and their Leibniz algebra
propagators  half waves, profiles, free flows, decay and integral estimates
solver       UV system integrator, changes of variables, data and X norms
resonance    phases, resonance geometry, cutoffs, bilinear multipliers
eft          F hierarchy, EFT data, V^m transform, EFT solvers, residuals
scattering   scattered states, comparisons and M-sweeps
config, cli  run configuration and the command-line front end
"""

from .grid import Field, GridSpec, NormSpec, bessel_potential, norm, transform
from .jets import JetField, jet_multiply

__all__ = [
    "Field",
    "GridSpec",
    "NormSpec",
    "JetField",
    "bessel_potential",
    "jet_multiply",
    "norm",
    "transform",
]

__version__ = "0.1.0"
