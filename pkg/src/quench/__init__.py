"""Correlators and self-consistent mass dynamics after a sudden scalar quench.

The package follows one program: quench a free (or Hartree-truncated) scalar
field from (m0, lam0) to (m, lam) at t = 0, then track every object that can
be computed at desk scale -- mode and real-space propagators with their
light-cone structure, the imaginary-time slab that reproduces the stationary
correlator, per-mode and averaged effective temperatures, the self-consistent
effective mass after a composite quench, and the exact time evolution of that
mass.
"""

from .core import (
    OMEGA_D,
    GridProfile,
    MomentumGrid,
    PropagatorSample,
    QuenchSpec,
    angular_factor,
    build_grid,
    default_grid,
    omega,
    radial_integrate,
)

__version__ = "0.1.0"
