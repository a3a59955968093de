"""Free-theory quench propagators.

The exact single-mode correlator after a sudden mass quench splits into a
Feynman part and two cosine terms carrying the quench memory:

    C(t1, t2; k) = (w - w0)^2/(4 w^2 w0) cos w(t1 - t2)
                 + (w^2 - w0^2)/(4 w^2 w0) cos w(t1 + t2)
                 + exp(-i w |t1 - t2|)/(2 w)

with w0 = sqrt(k^2 + m0^2), w = sqrt(k^2 + m^2). Real-space correlators are
radial transforms of the real part against the d-dimensional angular kernel.
In the deep limit (m0 much larger than every other scale, massless final
state) only the memory terms survive at leading order,
m0 sin(k t1) sin(k t2)/(2 k^2), and the transform has exact piecewise closed
forms with a sharp horizon at r = 2t.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import j0

from .core import omega, radial_integrate

__all__ = [
    "LargeTimeEnvelope",
    "ModePair",
    "QuadratureWarning",
    "VertexParams",
    "deep_quench_closed_form",
    "horizon_indicator",
    "large_time_envelope",
    "quench_mode_propagator",
    "real_space_propagator",
    "stationary_mode_part",
    "vertex_correlator",
]


class QuadratureWarning(UserWarning):
    """Estimated truncation error of an oscillatory transform is not small."""


@dataclass(frozen=True)
class ModePair:
    """Pre/post-quench frequencies of one radial mode; accepts arrays."""

    omega0: object
    omega: object

    def __post_init__(self):
        if not (np.all(np.asarray(self.omega0) > 0.0) and np.all(np.asarray(self.omega) > 0.0)):
            raise ValueError("mode frequencies must be > 0")

    @classmethod
    def from_spec(cls, k, spec):
        return cls(omega0=omega(k, spec.m0), omega=omega(k, spec.m))


@dataclass(frozen=True)
class VertexParams:
    """Charge and pre-quench mass entering the massless-1d vertex correlator."""

    q: float
    m0: float

    def __post_init__(self):
        if not math.isfinite(self.q):
            raise ValueError("q must be real and finite")
        if not (self.m0 > 0.0 and math.isfinite(self.m0)):
            raise ValueError("m0 must be finite and > 0")


def quench_mode_propagator(t1, t2, pair):
    """Exact single-mode correlator; complex, symmetric in t1 <-> t2."""
    w0 = np.asarray(pair.omega0, dtype=float)
    w = np.asarray(pair.omega, dtype=float)
    dt = t1 - t2
    pre = 1.0 / (4.0 * w * w * w0)
    memory = (w - w0) ** 2 * pre * np.cos(w * dt) + (w * w - w0 * w0) * pre * np.cos(w * (t1 + t2))
    feynman = np.exp(-1j * w * abs(dt)) / (2.0 * w)
    return memory + feynman


def stationary_mode_part(pair):
    """Time-independent part: memory average plus equal-time Feynman term."""
    w0 = np.asarray(pair.omega0, dtype=float)
    w = np.asarray(pair.omega, dtype=float)
    return (w0 - w) ** 2 / (4.0 * w0 * w * w) + 1.0 / (2.0 * w)


def _angular_kernel(d, kr):
    # isotropic angular averages of exp(i k.r)
    if d == 1:
        return np.cos(kr)
    if d == 2:
        return j0(kr)
    return np.sinc(kr / np.pi)


def real_space_propagator(r, t1, t2, spec, grid, deep=False):
    """Radial transform of the mode correlator's real part at separation r.

    deep=True integrates the deep-limit mode function
    m0 sin(k t1) sin(k t2)/(2 k^2) instead of the full correlator; the limit
    is an explicit caller choice, never inferred from the mass ratio.
    Equal times are required for d > 1 (the unequal-time angular average is
    out of contract there). d=1 with m=0 is refused outside the deep limit:
    the k=0 mode makes the transform infrared divergent, and the sensible
    object in that regime is vertex_correlator.

    The truncation error is estimated by re-evaluating on a half-resolution
    grid of the same layout; a warning (never an error) is issued when the
    estimate exceeds 1e-4 of the result.
    """
    if r < 0.0:
        raise ValueError("r must be >= 0")
    if spec.d > 1 and t1 != t2:
        raise ValueError("unequal-time real-space transforms are only supported in d = 1")
    if not deep and spec.d == 1 and spec.m == 0.0:
        raise ValueError(
            "d = 1 massless transform is infrared divergent; use vertex_correlator"
        )

    if deep:

        def f(k):
            return spec.m0 * np.sin(k * t1) * np.sin(k * t2) / (2.0 * k * k) * _angular_kernel(
                spec.d, k * r
            )

    else:

        def f(k):
            pair = ModePair.from_spec(k, spec)
            return quench_mode_propagator(t1, t2, pair).real * _angular_kernel(spec.d, k * r)

    value = radial_integrate(grid, f)
    if grid.profile is not None:
        rough = radial_integrate(grid.coarsened(), f)
        err = abs(value - rough)
        if err > 1e-4 * max(abs(value), 1e-300):
            warnings.warn(
                f"oscillatory transform error estimate {err:.3e} exceeds 1e-4 of the result",
                QuadratureWarning,
                stacklevel=2,
            )
    return float(value)


def deep_quench_closed_form(r, t, d, m0):
    """Exact deep-quench real-space correlator, piecewise across the horizon.

    Outside (r > 2t) the value is 0; inside it is m0(2t - r)/8 in d=1,
    (m0/8pi) log[(2t + sqrt(4t^2 - r^2))/r] in d=2 and m0/(16 pi r) in d=3.
    The boundary r = 2t maps to the inside branch (continuous in d = 1, 2).
    """
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2 or 3, got {d!r}")
    if r < 0.0 or t < 0.0:
        raise ValueError("r and t must be >= 0")
    if d == 3 and r == 0.0:
        raise ValueError("d = 3 closed form diverges at r = 0")
    if r > 2.0 * t:
        return 0.0
    if d == 1:
        return m0 * (2.0 * t - r) / 8.0
    if d == 2:
        if r == 0.0:
            return math.inf
        root = math.sqrt(max(4.0 * t * t - r * r, 0.0))
        return m0 / (8.0 * math.pi) * math.log((2.0 * t + root) / r)
    return m0 / (16.0 * math.pi * r)


def horizon_indicator(r, t):
    """True strictly inside the horizon r < 2t; the boundary counts outside."""
    return r < 2.0 * t


class LargeTimeEnvelope(NamedTuple):
    stationary: float
    oscillation_amplitude: float
    oscillation_frequency: float
    decay_power: float


def large_time_envelope(r, t, spec):
    """Stationary-phase asymptotics of the approach to stationarity.

    Pure envelope evaluation, no fitting: the oscillating part of the
    equal-time correlator decays as t^(-d/2) cos(2 m t), the stationary part
    falls off in space as exp(-m r)/r^((d-1)/2).
    """
    if spec.m <= 0.0:
        raise ValueError("large-time asymptotics require m > 0")
    if spec.d == 1:
        stationary = math.exp(-spec.m * r)
    else:
        stationary = math.exp(-spec.m * r) / r ** ((spec.d - 1) / 2.0)
    return LargeTimeEnvelope(
        stationary=stationary,
        oscillation_amplitude=t ** (-spec.d / 2.0),
        oscillation_frequency=2.0 * spec.m,
        decay_power=spec.d / 2.0,
    )


def vertex_correlator(r, t, vp):
    """Deep-quench massless-1d vertex two-point function, exact piecewise."""
    if r > 2.0 * t:
        return math.exp(-vp.q * vp.q * vp.m0 * t / 4.0)
    return math.exp(-vp.q * vp.q * vp.m0 * r / 8.0)
