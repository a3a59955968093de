"""Hartree-Fock statics for the composite quench.

Tadpole integrals h_d, renormalization counterterms, the effective mass
right after the quench, and the late-time gap equation for m*. Everything
here is stateless; solvers may run concurrently over many specs.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .core import angular_factor
from .eff_temp import f_d

__all__ = [
    "GapSolveResult",
    "InitialMassResult",
    "coupling_counterterm_3d",
    "h_d",
    "initial_effective_mass",
    "m_star_asymptotic",
    "mass_counterterm",
    "renormalized_coupling",
    "sigma_star_integral",
    "solve_m_star",
    "solve_m_star_renormalized_3d",
]

_GAP_TOL = 1e-8


def _decade_quad(integrand, edges):
    """Piecewise adaptive quadrature over a sorted edge list (inf tail ok).

    Wide smooth integrands lose the adaptive rule when one panel spans many
    orders of magnitude, so callers pass geometric edges.
    """
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if not hi > lo:
            continue
        val, _ = quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += val
    return total


def _geometric_edges(inner, outer):
    edges = [0.0, min(inner, outer)]
    if outer > inner:
        n_dec = max(1, int(math.ceil(math.log10(outer / inner))))
        edges.extend(np.geomspace(inner, outer, n_dec + 1)[1:])
    return edges


def h_d(s, d, cutoff=None):
    """Ground-state tadpole difference between unit mass and mass s.

    Closed form of int_0^cutoff k^(d-1) dk [1/(2 sqrt(k^2+1))
    - 1/(2 sqrt(k^2+s^2))]. In d=1,2 the integral converges and the
    cutoff -> infinity forms (log s)/2 and (s-1)/2 are returned (a finite
    cutoff argument is ignored; corrections are O(1/cutoff)). In d=3 the
    integral grows like (s^2-1) log(cutoff)/4 and the cutoff is mandatory,
    measured in units of the integrand's unit mass; the full antiderivative
    is kept because the leading log alone is off by an s-dependent constant
    that never decays relative to the slow log.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    if not (math.isfinite(s) and s >= 0.0):
        raise ValueError("mass ratio s must be finite and >= 0")
    if d == 1:
        if s == 0.0:
            raise ValueError("h_1 diverges at s = 0; use the massless limit branch")
        return 0.5 * math.log(s)
    if d == 2:
        return 0.5 * (s - 1.0)
    if cutoff is None or not (math.isfinite(cutoff) and cutoff > 0.0):
        raise ValueError("d = 3 tadpole needs a finite positive cutoff")
    # difference of the two sqrt antiderivatives, written cancellation-free
    lam = cutoff
    hi = math.sqrt(lam * lam + 1.0)
    hs = math.sqrt(lam * lam + s * s)
    out = 0.25 * lam * (1.0 - s * s) / (hi + hs) - 0.25 * math.asinh(lam)
    if s > 0.0:
        out += 0.25 * s * s * math.asinh(lam / s)
    return out


def mass_counterterm(mass, coupling, d, cutoff):
    """delta m^2 removing the post-quench ground-state tadpole at a cutoff.

    (coupling/2) * int d^dk/(2 pi)^d 1/(2 sqrt(k^2 + mass^2)) up to k = cutoff,
    by direct quadrature of the integrand.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    if not (math.isfinite(cutoff) and cutoff > 0.0):
        raise ValueError("counterterm needs a finite positive cutoff")
    if not (math.isfinite(mass) and mass >= 0.0):
        raise ValueError("mass must be finite and >= 0")
    if coupling == 0.0:
        return 0.0

    def integrand(k):
        return k ** (d - 1) / (2.0 * math.sqrt(k * k + mass * mass))

    edges = _geometric_edges(max(mass, 1.0), cutoff)
    edges[-1] = cutoff
    val = _decade_quad(integrand, edges)
    return 0.5 * coupling * angular_factor(d) * val


def coupling_counterterm_3d(mass, cutoff):
    """delta lambda removing the 3d log divergence of the gap equation.

    int d^3k/(2 pi)^3 1/(8 (k^2 + mass^2)^(3/2)) up to k = cutoff, by
    direct quadrature. mass = 0 is rejected (the integrand turns 1/(8 k^3)
    and diverges at the origin).
    """
    if not (math.isfinite(mass) and mass > 0.0):
        raise ValueError("coupling counterterm needs mass > 0")
    if not (math.isfinite(cutoff) and cutoff > 0.0):
        raise ValueError("counterterm needs a finite positive cutoff")

    def integrand(k):
        return k * k / (8.0 * (k * k + mass * mass) ** 1.5)

    edges = _geometric_edges(mass, cutoff)
    edges[-1] = cutoff
    return angular_factor(3) * _decade_quad(integrand, edges)


def renormalized_coupling(lam_r, delta_lam):
    """Bare coupling lam_r / (1 - lam_r delta_lam); refuses the Landau pole."""
    den = 1.0 - lam_r * delta_lam
    if den <= 1e-12:
        raise ValueError(
            f"Landau pole: 1 - lam_r*delta_lam = {den:.3e}, bare coupling undefined"
        )
    return lam_r / den


@dataclass(frozen=True)
class InitialMassResult:
    """Effective mass squared right after the quench; can sit below zero."""

    m_eff_sq_0: float
    stable: bool


def initial_effective_mass(spec):
    """m_eff^2(0+) = m^2 + (lam/2) (Omega_d/(2 pi)^d) m0^(d-1) h_d(m/m0).

    The field fluctuations are still the pre-quench ones while the mass and
    the tadpole counterterm have already jumped, so a mass-lowering quench
    at large coupling can leave the system in an unstable (negative
    curvature) initial state.
    """
    cut = spec.cutoff_value() / spec.m0 if spec.d == 3 else None
    tad = spec.m0 ** (spec.d - 1) * h_d(spec.m / spec.m0, spec.d, cutoff=cut)
    val = spec.m**2 + 0.5 * spec.lam * angular_factor(spec.d) * tad
    return InitialMassResult(m_eff_sq_0=val, stable=val > 0.0)


@dataclass(frozen=True)
class GapSolveResult:
    """Late-time effective mass m*, the shift Sigma* = m*^2 - m^2, the
    normalized gap-equation residual, and which solution branch applied."""

    m_star: float
    sigma_star: float
    residual: float
    branch: str


def sigma_star_integral(m_star, spec):
    """Sigma*(m*) = (lam/2)(Omega_d/(2 pi)^d)[m0^(d-1) f_d(m*/m0)
    + m*^(d-1) h_d(m/m*)], the momentum integral side of the gap equation.

    The f_d piece converges in every d; only the tadpole piece needs the
    cutoff in d=3, passed in units of m* (the unit mass of that integrand).
    """
    d, m0, m = spec.d, spec.m0, spec.m
    val = m0 ** (d - 1) * f_d(m_star / m0, d)
    if m_star > 0.0:
        cut = spec.cutoff_value() / m_star if d == 3 else None
        val += m_star ** (d - 1) * h_d(m / m_star, d, cutoff=cut)
    return 0.5 * spec.lam * angular_factor(d) * val


def solve_m_star(spec, tol=_GAP_TOL):
    """Solve m*^2 = m^2 + Sigma*(m*) for the asymptotic effective mass.

    Roots are sought in u = m*^2 on [m^2, infinity): the right-hand side is
    smooth in u there and the physical branch satisfies m* >= m. The
    bracket expands geometrically until the sign flips and gives up loudly
    if it never does. In d=3 at large coupling the first crossing can sit
    above the cutoff itself (the tadpole saturates once m* > cutoff); that
    root is still the honest solution of the cutoff equation, just strongly
    cutoff dominated.
    """
    m, m0, lam, d = spec.m, spec.m0, spec.lam, spec.d
    if lam == 0.0:
        return GapSolveResult(m_star=m, sigma_star=0.0, residual=0.0, branch="no_quench")
    if d == 1 and m == 0.0:
        # f_1(s -> 0) is infrared divergent and the true solution follows
        # m to zero, so short-circuit instead of integrating
        return GapSolveResult(
            m_star=0.0, sigma_star=0.0, residual=0.0, branch="massless_1d_limit"
        )
    if d == 3:
        spec.cutoff_value()  # fail early if the cutoff is missing

    def gap(u):
        return u - m * m - sigma_star_integral(math.sqrt(u), spec)

    u_lo = m * m if m > 0.0 else (1e-6 * m0) ** 2
    g_lo = gap(u_lo)
    if g_lo == 0.0:
        # m = m0: both integrals vanish identically and m* = m exactly
        return GapSolveResult(m_star=m, sigma_star=0.0, residual=0.0, branch="generic")
    u_hi = max(4.0 * u_lo, m0 * m0)
    for _ in range(200):
        if gap(u_hi) > 0.0:
            break
        u_hi *= 4.0
    else:
        raise RuntimeError(
            "gap equation has no bracket: the coupling integral outgrows m*^2 "
            f"(d={d}, lam={lam:g}); no real solution with m* >= m"
        )
    u_star = brentq(gap, u_lo, u_hi, xtol=1e-14, rtol=8.9e-16)
    residual = abs(gap(u_star)) / (m0 * m0)
    if not residual < tol:
        raise RuntimeError(f"gap residual {residual:.3e} above tolerance {tol:g}")
    return GapSolveResult(
        m_star=math.sqrt(u_star),
        sigma_star=u_star - m * m,
        residual=residual,
        branch="generic",
    )


def m_star_asymptotic(spec, regime):
    """Printed asymptotic solutions of the gap equation, guarded by regime.

    massless_small_lambda (m = 0): 0 in d=1 for every coupling, the
    square-root-of-coupling forms in d=2,3. massless_1d_limit: the slow
    logarithmic approach of m* to zero as m -> 0 in d=1. large_lambda:
    the large-coupling, large-m growth laws m^2/(2 m0) in d=1 and
    4 m/pi in d=2; in d=3 that limit is cutoff dependent and refused.
    """
    d, m, m0, lam = spec.d, spec.m, spec.m0, spec.lam
    if regime == "massless_small_lambda":
        if m != 0.0:
            raise ValueError("massless_small_lambda regime needs m = 0")
        if d == 1:
            return 0.0
        if d == 2:
            if not 0.0 < lam < m0:
                raise ValueError("2d massless form needs 0 < lam < m0 (log positive)")
            return 0.25 * math.sqrt(lam * m0 * math.log(m0 / lam) / (2.0 * math.pi))
        if not 0.0 < lam < 1.0:
            raise ValueError("3d massless form is a small-coupling law; needs 0 < lam < 1")
        return m0 * math.sqrt(lam) / (4.0 * math.pi * math.sqrt(2.0))
    if regime == "massless_1d_limit":
        if d != 1:
            raise ValueError("massless_1d_limit regime is d = 1 only")
        if not 0.0 < m < m0:
            raise ValueError("massless_1d_limit needs 0 < m < m0")
        if lam <= 0.0:
            raise ValueError("massless_1d_limit needs lam > 0")
        den = 2.0 * math.log(m0 / m) + 1.0 - 16.0 * math.pi**2 * m * m / (lam * m0 * m0)
        if den <= 0.0:
            raise ValueError("out of regime: expansion denominator not positive")
        return m0 * (math.pi / 2.0) / den
    if regime == "large_lambda":
        if d == 3:
            raise ValueError("3d large-coupling mass is cutoff dependent; refused")
        if m <= 0.0:
            raise ValueError("large_lambda growth laws need m > 0")
        return m * m / (2.0 * m0) if d == 1 else 4.0 * m / math.pi
    raise ValueError(f"unknown regime {regime!r}")


def solve_m_star_renormalized_3d(spec, tol=_GAP_TOL):
    """Cutoff-free d=3 gap equation with the coupling-counterterm subtraction.

    The tadpole log divergence is cancelled by an extra
    (m*^2 - m^2)/(4 omega_k^3) under the integral, with omega_k at the
    post-quench mass; spec.lam is read as the renormalized coupling. Valid
    as a small-coupling statement only. At m = 0 the subtraction kernel
    1/(4 k^3) is infrared divergent, so the subtraction mass backs off to
    m0 there (a renormalization-scheme choice; the small-coupling answer
    is scheme independent).
    """
    if spec.d != 3:
        raise ValueError("renormalized gap equation is d = 3 only")
    m, m0, lam = spec.m, spec.m0, spec.lam
    if lam == 0.0:
        return GapSolveResult(m_star=m, sigma_star=0.0, residual=0.0, branch="no_quench")
    sm = m / m0
    sc = sm if sm > 0.0 else 1.0

    def excess(u):
        ss = math.sqrt(u) / m0

        def integrand(k):
            w0 = math.sqrt(k * k + 1.0)
            ws = math.sqrt(k * k + ss * ss)
            wm = math.sqrt(k * k + sm * sm)
            wc = math.sqrt(k * k + sc * sc)
            quench = (w0 - ws) ** 2 / (4.0 * w0 * ws * ws)
            tad = (sm * sm - ss * ss) / (2.0 * wm * ws * (wm + ws))
            subtr = (ss * ss - sm * sm) / (4.0 * wc**3)
            return k * k * (quench + tad + subtr)

        edges = _geometric_edges(max(1.0, ss, sm), 1e4 * max(1.0, ss, sm))
        edges.append(np.inf)
        val = _decade_quad(integrand, edges)
        return 0.5 * lam * angular_factor(3) * m0 * m0 * val

    def gap(u):
        return u - m * m - excess(u)

    u_lo = m * m if m > 0.0 else (1e-6 * m0) ** 2
    g_lo = gap(u_lo)
    if g_lo == 0.0:
        return GapSolveResult(m_star=m, sigma_star=0.0, residual=0.0, branch="generic")
    u_hi = max(4.0 * u_lo, m0 * m0)
    for _ in range(200):
        if gap(u_hi) > 0.0:
            break
        u_hi *= 4.0
    else:
        raise RuntimeError("renormalized gap equation has no bracket")
    u_star = brentq(gap, u_lo, u_hi, xtol=1e-14, rtol=8.9e-16)
    residual = abs(gap(u_star)) / (m0 * m0)
    if not residual < tol:
        raise RuntimeError(f"gap residual {residual:.3e} above tolerance {tol:g}")
    return GapSolveResult(
        m_star=math.sqrt(u_star),
        sigma_star=u_star - m * m,
        residual=residual,
        branch="generic",
    )
