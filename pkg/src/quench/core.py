"""Shared domain types, dispersion relation, and radial momentum quadrature.

Every isotropic momentum integral downstream has the form

    I[f] = Omega_d/(2 pi)^d * int_0^Lambda dk k^(d-1) f(k)

with a hard UV cutoff Lambda. The grid is a composite 2-point Gauss-Legendre
rule: exact for cubics on each panel and free of endpoint nodes, so
integrands that blow up at k = 0 but are integrable against k^(d-1) still
evaluate. The default panel layout resolves three regions: one panel pinned
to the origin, log-spaced panels through the infrared structure up to
k_mid ~ 10 max(m0, m), uniform panels from there to the cutoff.

Summation is compensated (math.fsum) in ascending node order, never
parallelized internally, so repeated evaluations are bit identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "INFINITE",
    "OMEGA_D",
    "GridProfile",
    "MomentumGrid",
    "PropagatorSample",
    "QuenchSpec",
    "angular_factor",
    "build_grid",
    "default_grid",
    "is_infinite",
    "omega",
    "radial_integrate",
]

# solid angle of the (d-1)-sphere; d counts spatial dimensions only
OMEGA_D = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}

# 2-point Gauss-Legendre abscissae mapped to [0, 1]; both weights are 1/2
_GL2 = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)


class _Infinite:
    """Tagged infinity for no-quench sentinels (matched slab thickness,
    effective inverse temperature). Deliberately not a float so it cannot
    drift into arithmetic unnoticed; float() it explicitly if needed."""

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __float__(self):
        return math.inf


INFINITE = _Infinite()


def is_infinite(x):
    """True for the tagged sentinel or an actual float infinity."""
    if x is INFINITE:
        return True
    try:
        return math.isinf(x)
    except TypeError:
        return False


def angular_factor(d):
    """Omega_d/(2 pi)^d, the angular volume over the Fourier normalization."""
    if d not in OMEGA_D:
        raise ValueError(f"spatial dimension must be 1, 2 or 3, got {d!r}")
    return OMEGA_D[d] / (2.0 * math.pi) ** d


def omega(k, mass):
    """Relativistic dispersion sqrt(k^2 + mass^2); vectorized in both slots."""
    return np.hypot(k, mass)


@dataclass(frozen=True)
class QuenchSpec:
    """Sudden quench protocol (m0, lam0) -> (m, lam) at t = 0.

    m0 and m are the renormalized masses before and after the quench
    (energy units, m0 > 0, m >= 0). lam0 and lam are the quartic couplings
    before and after (energy^(3-d) units; `lambda` is reserved in Python,
    hence the short names). cutoff is the hard UV scale Lambda: results in
    d = 3 stay cutoff sensitive so it is mandatory there, elsewhere it
    defaults to 100x the heavier mass. The excitation speed c is fixed to 1.
    """

    d: int
    m0: float
    m: float
    lam0: float = 0.0
    lam: float = 0.0
    cutoff: float | None = None
    c: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d!r}")
        if not (math.isfinite(self.m0) and self.m0 > 0.0):
            raise ValueError("m0 must be finite and > 0")
        if not (math.isfinite(self.m) and self.m >= 0.0):
            raise ValueError("m must be finite and >= 0")
        if self.lam0 < 0.0 or self.lam < 0.0:
            raise ValueError("couplings must be >= 0")
        if self.c != 1.0:
            raise ValueError("only c = 1 is supported")
        if self.cutoff is not None:
            if not (math.isfinite(self.cutoff) and self.cutoff > max(self.m0, self.m)):
                raise ValueError("cutoff must be finite and exceed both masses")

    def cutoff_value(self):
        """Lambda actually used: the explicit value, else 100x the heavier mass.

        In d = 3 the coupling is dimensionful and nothing decouples from the
        UV, so a silent default would hide physics: refuse instead.
        """
        if self.cutoff is not None:
            return float(self.cutoff)
        if self.d == 3:
            raise ValueError("d = 3 is cutoff sensitive: set cutoff explicitly")
        return 100.0 * max(self.m0, self.m)


@dataclass(frozen=True)
class GridProfile:
    """Node layout descriptor for build_grid.

    kind "log_uniform" (default): a single panel pinned at k_start (normally
    0), log-spaced panels from k_min to k_mid, uniform panels from k_mid to
    the cutoff. kind "uniform": all panels evenly spaced on [k_start, cutoff];
    time evolution uses this family because an even mode ladder makes the
    finite-grid recurrence time predictable (t_rev ~ pi / panel width).

    k_start > 0 drops the origin panel and starts the log section there; use
    it for integrands that are non-integrable at k = 0.
    """

    n_nodes: int = 4096
    k_min: float = 1e-4
    k_mid: float = 10.0
    kind: str = "log_uniform"
    k_start: float = 0.0

    def __post_init__(self):
        if self.kind not in ("log_uniform", "uniform"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.n_nodes < 64:
            raise ValueError("node count < 64 refused, quadrature error would be uncontrolled")
        if self.n_nodes % 2:
            raise ValueError("node count must be even (2-point panels)")
        if not (self.k_start >= 0.0 and math.isfinite(self.k_start)):
            raise ValueError("k_start must be finite and >= 0")
        if not (0.0 < self.k_min < self.k_mid):
            raise ValueError("need 0 < k_min < k_mid")

    @classmethod
    def from_spec(cls, spec, n_nodes=4096, kind="log_uniform", k_start=0.0):
        """Scale-aware layout: k_min tracks the lightest mass, k_mid the heaviest."""
        k_min = 1e-4 * min(spec.m0, spec.m + 1e-6)
        k_mid = 10.0 * max(spec.m0, spec.m)
        return cls(n_nodes=n_nodes, k_min=k_min, k_mid=k_mid, kind=kind, k_start=k_start)


@dataclass(frozen=True)
class MomentumGrid:
    """Radial quadrature nodes and weights; weights carry Omega_d/(2pi)^d k^(d-1).

    profile records the layout the grid was built from so callers can rebuild
    coarsened copies of the same family for truncation-error estimates.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    cutoff: float
    profile: GridProfile | None = None

    def __len__(self):
        return self.nodes.size

    def coarsened(self, factor=2):
        """Same layout with n_nodes/factor nodes (floor 64); needs a profile."""
        if self.profile is None:
            raise ValueError("grid carries no profile, cannot coarsen")
        n = max(64, (self.profile.n_nodes // factor) // 2 * 2)
        from dataclasses import replace

        return build_grid(self.d, self.cutoff, replace(self.profile, n_nodes=n))


_SAMPLE_KINDS = frozenset(
    {"quench_mode", "quench_real_space", "deep_quench", "slab", "thermal", "vertex"}
)


@dataclass(frozen=True)
class PropagatorSample:
    """One evaluated correlator point tagged by the object that produced it.

    args is (t1, t2, k) for mode kinds and (r, t) for real-space kinds.
    Equal-time mode samples of the quench correlator are occupation-like:
    real and nonnegative, enforced here.
    """

    kind: str
    args: tuple
    value: complex

    def __post_init__(self):
        if self.kind not in _SAMPLE_KINDS:
            raise ValueError(f"unknown sample kind {self.kind!r}")
        value = complex(self.value)
        if self.kind == "quench_mode" and len(self.args) == 3 and self.args[0] == self.args[1]:
            if value.imag != 0.0 or value.real < 0.0:
                raise ValueError("equal-time mode correlator must be real and >= 0")


def _panel_edges(cutoff, profile):
    """Panel boundary array; strictly increasing, edges[0] = k_start."""
    n_panels = profile.n_nodes // 2
    if profile.kind == "uniform":
        if profile.k_start >= cutoff:
            raise ValueError("k_start must lie below the cutoff")
        return np.linspace(profile.k_start, cutoff, n_panels + 1)
    # log_uniform: clamp the crossover scales so the layout stays ordered
    # even when the caller's cutoff sits below 10*max(m0, m)
    k_mid = min(profile.k_mid, 0.5 * cutoff)
    k_min = min(profile.k_min, 0.1 * k_mid)
    if profile.k_start == 0.0:
        n_log = (n_panels - 1) // 2
        n_uni = n_panels - 1 - n_log
        head = np.concatenate(([0.0], np.geomspace(k_min, k_mid, n_log + 1)))
    else:
        if profile.k_start >= k_mid:
            raise ValueError("k_start must lie below the log/uniform crossover")
        n_log = n_panels // 2
        n_uni = n_panels - n_log
        head = np.geomspace(profile.k_start, k_mid, n_log + 1)
    tail = np.linspace(k_mid, cutoff, n_uni + 1)[1:]
    return np.concatenate((head, tail))


def build_grid(d, cutoff, profile=None):
    """Build a MomentumGrid: composite 2-point Gauss-Legendre panels.

    Per panel [a, b] the nodes sit at the midpoint +- (b-a)/(2 sqrt(3)) with
    bare weight (b-a)/2 each; the rule is exact for cubics. The returned
    weights additionally carry the angular factor and the k^(d-1) measure,
    so radial_integrate(grid, f) approximates
    Omega_d/(2pi)^d int k^(d-1) f(k) dk over [k_start, cutoff].
    """
    if d not in OMEGA_D:
        raise ValueError(f"spatial dimension must be 1, 2 or 3, got {d!r}")
    if not (math.isfinite(cutoff) and cutoff > 0.0):
        raise ValueError("cutoff must be finite and > 0")
    if profile is None:
        profile = GridProfile()
    edges = _panel_edges(float(cutoff), profile)
    left = edges[:-1]
    width = np.diff(edges)
    nodes = np.empty(2 * width.size)
    nodes[0::2] = left + _GL2[0] * width
    nodes[1::2] = left + _GL2[1] * width
    weights = np.repeat(0.5 * width, 2) * angular_factor(d) * nodes ** (d - 1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return MomentumGrid(d=d, nodes=nodes, weights=weights, cutoff=float(cutoff), profile=profile)


def default_grid(spec, n_nodes=4096):
    """Grid at the spec's own cutoff with the scale-aware default profile."""
    return build_grid(spec.d, spec.cutoff_value(), GridProfile.from_spec(spec, n_nodes=n_nodes))


def radial_integrate(grid, f):
    """Quadrature sum over the grid, compensated and order-deterministic.

    f must be vectorized over the node array (scalar returns broadcast) and
    finite at every node; a non-finite evaluation raises FloatingPointError
    naming the offending node. Complex integrands are accumulated
    componentwise with the same node ordering. Never parallelizes
    internally: bit-identical repeats are part of the contract.
    """
    vals = np.asarray(f(grid.nodes))
    if vals.shape != grid.nodes.shape:
        vals = np.broadcast_to(vals, grid.nodes.shape)
    finite = np.isfinite(vals)
    if not finite.all():
        i = int(np.argmin(finite))
        raise FloatingPointError(
            f"integrand not finite at node {i} (k = {grid.nodes[i]:.17g}): {vals[i]!r}"
        )
    if np.iscomplexobj(vals):
        return complex(
            math.fsum(grid.weights * vals.real),
            math.fsum(grid.weights * vals.imag),
        )
    return math.fsum(grid.weights * vals)
