"""Grid and dispersion contracts: frozen quadrature oracles and invariants."""

import math

import numpy as np
import pytest

from quench.core import (
    GridProfile,
    PropagatorSample,
    QuenchSpec,
    angular_factor,
    build_grid,
    default_grid,
    omega,
    radial_integrate,
)


def test_omega_anchor_values():
    assert omega(0.0, 2.0) == 2.0
    assert omega(3.0, 4.0) == 5.0
    assert omega(1.0, 0.0) == 1.0


def test_omega_monotone_and_bounded_below():
    rng = np.random.default_rng(11)
    k = np.sort(rng.uniform(0.0, 50.0, size=200))
    m = np.sort(rng.uniform(0.0, 50.0, size=200))
    assert np.all(np.diff(omega(k, 3.0)) > 0)
    assert np.all(np.diff(omega(2.0, m)) > 0)
    assert np.all(omega(k, m) >= np.maximum(k, m))


def test_angular_factor_values():
    assert angular_factor(1) == pytest.approx(1.0 / math.pi, rel=1e-15)
    assert angular_factor(2) == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-15)
    assert angular_factor(3) == pytest.approx(1.0 / (2.0 * math.pi**2), rel=1e-15)
    with pytest.raises(ValueError):
        angular_factor(4)


def test_exponential_integral_d1():
    # int_0^100 e^-k dk * Omega_1/(2pi) = (1 - e^-100)/pi
    grid = build_grid(1, 100.0, GridProfile(n_nodes=2048))
    got = radial_integrate(grid, lambda k: np.exp(-k))
    want = (1.0 - math.exp(-100.0)) / math.pi
    assert abs(got - want) < 1e-8


def test_polynomial_integral_d3_exact():
    # measure alone: int_0^L k^2 dk * Omega_3/(2pi)^3 = L^3/3 / (2 pi^2)
    grid = build_grid(3, 100.0, None)
    got = radial_integrate(grid, lambda k: np.ones_like(k))
    want = 100.0**3 / 3.0 / (2.0 * math.pi**2)
    assert got == pytest.approx(want, rel=1e-12)


def test_measure_canceling_integrand_exact():
    # f = k^(1-d) makes the integrand constant: result is exactly af * Lambda
    for d in (1, 2, 3):
        grid = build_grid(d, 80.0, None)
        got = radial_integrate(grid, lambda k, d=d: k ** (1 - d))
        assert got == pytest.approx(angular_factor(d) * 80.0, rel=1e-12)


def test_antiderivative_oracle_d3():
    # int k^2/(2 sqrt(k^2+1)) dk = [k sqrt(k^2+1) - asinh(k)]/4
    lam = 100.0
    grid = build_grid(3, lam, None)
    got = radial_integrate(grid, lambda k: 1.0 / (2.0 * np.sqrt(k * k + 1.0)))
    want = angular_factor(3) * (lam * math.sqrt(lam * lam + 1.0) - math.asinh(lam)) / 4.0
    assert got == pytest.approx(want, rel=1e-6)


def test_inverse_square_tail_on_shifted_grid():
    # k^-(d+1) against the measure is k^-2: integrable only away from 0, so
    # start the grid at k_start and compare with 1/k_start - 1/Lambda
    d, lam, k0 = 2, 100.0, 1e-4
    grid = build_grid(d, lam, GridProfile(n_nodes=4096, k_min=k0, k_mid=10.0, k_start=k0))
    got = radial_integrate(grid, lambda k: k ** (-(d + 1)))
    want = angular_factor(d) * (1.0 / k0 - 1.0 / lam)
    assert got == pytest.approx(want, rel=1e-6)


def test_stationary_excess_vanishes_without_quench():
    # (omega0 - omega)^2/(4 omega0 omega^2) with m0 = m* = 1 is identically 0
    grid = build_grid(2, 100.0, None)

    def integrand(k):
        w0 = omega(k, 1.0)
        w = omega(k, 1.0)
        return (w0 - w) ** 2 / (4.0 * w0 * w * w)

    assert radial_integrate(grid, integrand) == 0.0


def test_linearity():
    grid = build_grid(1, 50.0, GridProfile(n_nodes=512))
    f = lambda k: np.exp(-k / 3.0)
    g = lambda k: 1.0 / (1.0 + k * k)
    rng = np.random.default_rng(7)
    for _ in range(10):
        a, b = rng.uniform(0.5, 2.0, size=2)
        lhs = radial_integrate(grid, lambda k: a * f(k) + b * g(k))
        rhs = a * radial_integrate(grid, f) + b * radial_integrate(grid, g)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_node_doubling_converged_stationary_integrand():
    spec = QuenchSpec(d=2, m0=1.0, m=2.0)

    def integrand(k):
        w0 = omega(k, spec.m0)
        w = omega(k, spec.m)
        return (w0 - w) ** 2 / (4.0 * w0 * w * w)

    coarse = radial_integrate(default_grid(spec, n_nodes=4096), integrand)
    fine = radial_integrate(default_grid(spec, n_nodes=8192), integrand)
    assert fine == pytest.approx(coarse, rel=1e-6)


def test_determinism_bit_identical():
    spec = QuenchSpec(d=2, m0=1.0, m=0.5)
    g1 = default_grid(spec, n_nodes=1024)
    g2 = default_grid(spec, n_nodes=1024)
    assert g1.nodes.tobytes() == g2.nodes.tobytes()
    assert g1.weights.tobytes() == g2.weights.tobytes()
    f = lambda k: np.cos(k) / (1.0 + k**4)
    assert radial_integrate(g1, f) == radial_integrate(g2, f)


def test_grid_structural_invariants():
    for d in (1, 2, 3):
        grid = build_grid(d, 100.0, GridProfile(n_nodes=256))
        assert np.all(np.diff(grid.nodes) > 0)
        assert grid.nodes[0] > 0.0
        assert grid.nodes[-1] <= grid.cutoff
        assert np.all(grid.weights >= 0.0)
        assert len(grid) == 256
        with pytest.raises(ValueError):
            grid.nodes[0] = 1.0  # frozen array


def test_uniform_profile_layout():
    grid = build_grid(1, 10.0, GridProfile(n_nodes=100, kind="uniform"))
    # 50 panels of width 0.2: consecutive panel midpoints 0.2 apart
    mids = 0.5 * (grid.nodes[0::2] + grid.nodes[1::2])
    assert np.allclose(np.diff(mids), 0.2, rtol=0, atol=1e-12)


def test_build_grid_rejections():
    with pytest.raises(ValueError):
        build_grid(1, -5.0, None)
    with pytest.raises(ValueError):
        build_grid(1, 0.0, None)
    with pytest.raises(ValueError):
        build_grid(4, 10.0, None)
    with pytest.raises(ValueError):
        GridProfile(n_nodes=32)
    with pytest.raises(ValueError):
        GridProfile(n_nodes=129)
    with pytest.raises(ValueError):
        GridProfile(kind="chebyshev")


def test_radial_integrate_flags_nonfinite_node():
    grid = build_grid(1, 10.0, GridProfile(n_nodes=64))

    def bad(k):
        out = np.ones_like(k)
        out[17] = np.nan
        return out

    with pytest.raises(FloatingPointError, match="node 17"):
        radial_integrate(grid, bad)


def test_zero_integrand():
    grid = build_grid(3, 10.0, GridProfile(n_nodes=64))
    assert radial_integrate(grid, lambda k: np.zeros_like(k)) == 0.0


def test_complex_integrand_componentwise():
    grid = build_grid(1, 60.0, GridProfile(n_nodes=2048))
    got = radial_integrate(grid, lambda k: np.exp(-k) * np.exp(1j * k))
    # int_0^inf e^-k e^{ik} dk = 1/(1 - i) = (1 + i)/2, tail < e^-60
    want = complex(0.5, 0.5) / math.pi
    assert abs(got - want) < 1e-8


def test_quench_spec_validation():
    with pytest.raises(ValueError):
        QuenchSpec(d=4, m0=1.0, m=1.0)
    with pytest.raises(ValueError):
        QuenchSpec(d=1, m0=0.0, m=1.0)
    with pytest.raises(ValueError):
        QuenchSpec(d=1, m0=1.0, m=-0.5)
    with pytest.raises(ValueError):
        QuenchSpec(d=1, m0=1.0, m=1.0, lam=-1.0)
    with pytest.raises(ValueError):
        QuenchSpec(d=1, m0=1.0, m=2.0, cutoff=1.5)
    with pytest.raises(ValueError):
        QuenchSpec(d=1, m0=1.0, m=1.0, c=2.0)


def test_cutoff_value_defaults():
    assert QuenchSpec(d=2, m0=1.0, m=0.5).cutoff_value() == 100.0
    assert QuenchSpec(d=2, m0=1.0, m=3.0).cutoff_value() == 300.0
    assert QuenchSpec(d=3, m0=1.0, m=0.0, cutoff=40.0).cutoff_value() == 40.0
    with pytest.raises(ValueError):
        QuenchSpec(d=3, m0=1.0, m=0.0).cutoff_value()


def test_grid_profile_from_spec_scales():
    spec = QuenchSpec(d=2, m0=1.0, m=0.5)
    prof = GridProfile.from_spec(spec)
    assert prof.k_min == pytest.approx(1e-4 * 0.500001)
    assert prof.k_mid == pytest.approx(10.0)


def test_propagator_sample_kinds():
    PropagatorSample(kind="slab", args=(0.1, 0.2, 1.0), value=0.3 + 0.1j)
    PropagatorSample(kind="quench_mode", args=(0.5, 0.5, 1.0), value=0.25 + 0.0j)
    with pytest.raises(ValueError):
        PropagatorSample(kind="retarded", args=(0.0, 0.0, 1.0), value=0.0j)
    with pytest.raises(ValueError):
        PropagatorSample(kind="quench_mode", args=(0.5, 0.5, 1.0), value=0.25 + 0.1j)
    with pytest.raises(ValueError):
        PropagatorSample(kind="quench_mode", args=(0.5, 0.5, 1.0), value=-0.25 + 0.0j)
