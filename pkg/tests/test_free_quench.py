"""Mode/real-space quench propagator contracts and horizon structure."""

import math
import warnings

import numpy as np
import pytest

from quench.core import GridProfile, QuenchSpec, build_grid, radial_integrate
from quench.free_quench import (
    ModePair,
    QuadratureWarning,
    VertexParams,
    _angular_kernel,
    deep_quench_closed_form,
    horizon_indicator,
    large_time_envelope,
    quench_mode_propagator,
    real_space_propagator,
    stationary_mode_part,
    vertex_correlator,
)


def test_no_quench_reduces_to_feynman():
    pair = ModePair(omega0=1.7, omega=1.7)
    rng = np.random.default_rng(3)
    for t1, t2 in rng.uniform(0.0, 10.0, size=(32, 2)):
        got = quench_mode_propagator(t1, t2, pair)
        want = np.exp(-1j * 1.7 * abs(t1 - t2)) / (2 * 1.7)
        assert abs(got - want) < 1e-15


def test_initial_condition_anchor():
    for w0, w in [(2.0, 1.0), (1.0, 3.0), (math.sqrt(26.0), math.sqrt(2.0))]:
        got = quench_mode_propagator(0.0, 0.0, ModePair(w0, w))
        assert abs(got - 1.0 / (2.0 * w0)) < 1e-15


def test_time_order_symmetry_exact():
    pair = ModePair(omega0=2.3, omega=0.9)
    rng = np.random.default_rng(5)
    for t1, t2 in rng.uniform(0.0, 8.0, size=(16, 2)):
        assert quench_mode_propagator(t1, t2, pair) == quench_mode_propagator(t2, t1, pair)


def test_equal_time_mode_real_and_nonnegative():
    rng = np.random.default_rng(9)
    for _ in range(64):
        w0, w = rng.uniform(0.05, 8.0, size=2)
        t = rng.uniform(0.0, 20.0)
        val = quench_mode_propagator(t, t, ModePair(w0, w))
        assert val.imag == 0.0
        assert val.real > 0.0


def test_stationary_mode_part_anchors():
    assert stationary_mode_part(ModePair(2.0, 1.0)) == pytest.approx(0.625, abs=1e-15)
    assert stationary_mode_part(ModePair(1.3, 1.3)) == pytest.approx(1 / 2.6, rel=1e-15)
    # deep limit: ratio to omega0/(4 omega^2) -> 1
    big = 1e8
    ratio = stationary_mode_part(ModePair(big, 1.0)) / (big / 4.0)
    assert ratio == pytest.approx(1.0, abs=1e-7)


def test_mode_pair_validation():
    with pytest.raises(ValueError):
        ModePair(omega0=0.0, omega=1.0)
    with pytest.raises(ValueError):
        ModePair(omega0=1.0, omega=-2.0)


DEEP_GRIDS = {
    1: build_grid(1, 200.0, GridProfile(n_nodes=8192, k_min=1e-3, k_mid=20.0)),
    2: build_grid(2, 200.0, GridProfile(n_nodes=8192, k_min=1e-3, k_mid=20.0)),
    3: build_grid(3, 400.0, GridProfile(n_nodes=16384, k_min=1e-3, k_mid=20.0)),
}
DEEP_SPECS = {d: QuenchSpec(d=d, m0=1.0, m=0.0, cutoff=DEEP_GRIDS[d].cutoff) for d in (1, 2, 3)}


def test_deep_transform_outside_horizon_d1():
    with warnings.catch_warnings():
        # exact value is 0: the relative error estimate cannot be meaningful
        warnings.simplefilter("ignore", QuadratureWarning)
        val = real_space_propagator(4.0, 1.0, 1.0, DEEP_SPECS[1], DEEP_GRIDS[1], deep=True)
    assert abs(val) < 1e-3


def test_deep_transform_inside_horizon_d1():
    val = real_space_propagator(1.0, 1.0, 1.0, DEEP_SPECS[1], DEEP_GRIDS[1], deep=True)
    assert abs(val - 1.0 / 8.0) < 1e-3


def test_deep_transform_inside_horizon_d3():
    val = real_space_propagator(1.0, 1.0, 1.0, DEEP_SPECS[3], DEEP_GRIDS[3], deep=True)
    assert abs(val - 1.0 / (16.0 * math.pi)) < 1e-3


@pytest.mark.parametrize("d", [1, 2, 3])
def test_deep_transform_matches_closed_form_inside(d):
    # 1% relative agreement inside the horizon
    points = [(0.5, 1.0), (1.0, 1.0), (2.0, 1.5)] if d < 3 else [(1.0, 1.0), (2.0, 1.5), (1.5, 1.0)]
    for r, t in points:
        got = real_space_propagator(r, t, t, DEEP_SPECS[d], DEEP_GRIDS[d], deep=True)
        want = deep_quench_closed_form(r, t, d, 1.0)
        assert got == pytest.approx(want, rel=1e-2)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_horizon_property_random_outside(d):
    rng = np.random.default_rng(40 + d)
    with warnings.catch_warnings():
        # outside the horizon the exact value is 0, so the relative error
        # estimate is meaningless noise; silence it for this sweep
        warnings.simplefilter("ignore", QuadratureWarning)
        for _ in range(128):
            t = rng.uniform(0.3, 2.0)
            r = 2.0 * t + rng.uniform(0.5, 3.0)
            val = real_space_propagator(r, t, t, DEEP_SPECS[d], DEEP_GRIDS[d], deep=True)
            assert abs(val) < 1e-3


def test_deep_closed_form_examples():
    assert deep_quench_closed_form(3.0, 1.0, 2, 1.0) == 0.0
    want = math.log(2.0 + math.sqrt(3.0)) / (8.0 * math.pi)
    assert deep_quench_closed_form(1.0, 1.0, 2, 1.0) == pytest.approx(want, rel=1e-15)
    assert deep_quench_closed_form(2.0, 1.0, 1, 1.0) == 0.0  # continuous kink at r = 2t
    assert deep_quench_closed_form(1.0, 1.0, 1, 1.0) == pytest.approx(1.0 / 8.0, rel=1e-15)
    assert deep_quench_closed_form(1.0, 1.0, 3, 1.0) == pytest.approx(
        1.0 / (16.0 * math.pi), rel=1e-15
    )
    # boundary maps to the inside branch in d = 3
    assert deep_quench_closed_form(2.0, 1.0, 3, 1.0) == pytest.approx(
        1.0 / (32.0 * math.pi), rel=1e-15
    )
    with pytest.raises(ValueError):
        deep_quench_closed_form(0.0, 1.0, 3, 1.0)
    with pytest.raises(ValueError):
        deep_quench_closed_form(-1.0, 1.0, 1, 1.0)


def test_horizon_indicator_convention():
    assert horizon_indicator(1.0, 1.0) is True
    assert horizon_indicator(3.0, 1.0) is False
    assert horizon_indicator(2.0, 1.0) is False  # boundary counts outside


def test_real_space_guards():
    spec = QuenchSpec(d=2, m0=1.0, m=1.0)
    grid = build_grid(2, 100.0, GridProfile(n_nodes=256))
    with pytest.raises(ValueError):
        real_space_propagator(-1.0, 0.0, 0.0, spec, grid)
    with pytest.raises(ValueError):
        real_space_propagator(1.0, 0.5, 0.3, spec, grid)  # unequal times, d > 1
    massless_1d = QuenchSpec(d=1, m0=1.0, m=0.0)
    grid1 = build_grid(1, 100.0, GridProfile(n_nodes=256))
    with pytest.raises(ValueError):
        real_space_propagator(1.0, 1.0, 1.0, massless_1d, grid1)


def test_stationarity_onset_power_d1():
    # the oscillating residual of the equal-time correlator decays as t^(-d/2)
    spec = QuenchSpec(d=1, m0=2.0, m=1.0, cutoff=40.0)
    grid = build_grid(1, 40.0, GridProfile(n_nodes=16384, kind="uniform"))
    r = 0.5

    def stat(k):
        return stationary_mode_part(ModePair.from_spec(k, spec)) * _angular_kernel(1, k * r)

    c_stat = radial_integrate(grid, stat)
    ts, resid = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureWarning)
        for j in range(7, 64, 4):  # t where cos(2mt) = +-1, inside [10/m, 100/m]
            t = j * math.pi / 2.0
            val = real_space_propagator(r, t, t, spec, grid)
            ts.append(t)
            resid.append(abs(val - c_stat))
    slope = np.polyfit(np.log(ts), np.log(resid), 1)[0]
    assert abs(slope + 0.5) < 0.1


def test_large_time_envelope():
    spec = QuenchSpec(d=1, m0=2.0, m=1.0)
    env = large_time_envelope(1.0, 25.0, spec)
    assert env.decay_power == 0.5
    assert env.oscillation_frequency == 2.0
    assert env.oscillation_amplitude == pytest.approx(25.0**-0.5, rel=1e-15)
    # spatial decay rate of the stationary envelope: ratio across dr = 1
    e1 = large_time_envelope(2.0, 25.0, spec).stationary
    e0 = large_time_envelope(1.0, 25.0, spec).stationary
    assert e1 / e0 == pytest.approx(math.exp(-1.0), abs=1e-12)
    for d in (2, 3):
        env_d = large_time_envelope(1.0, 25.0, QuenchSpec(d=d, m0=2.0, m=1.0, cutoff=300.0))
        assert env_d.decay_power == d / 2.0
    with pytest.raises(ValueError):
        large_time_envelope(1.0, 25.0, QuenchSpec(d=1, m0=2.0, m=0.0))


def test_vertex_correlator():
    vp = VertexParams(q=1.0, m0=1.0)
    assert vertex_correlator(3.0, 1.0, vp) == pytest.approx(math.exp(-0.25), rel=1e-15)
    assert vertex_correlator(1.0, 1.0, vp) == pytest.approx(math.exp(-0.125), rel=1e-15)
    assert vertex_correlator(5.0, 0.1, VertexParams(q=0.0, m0=3.0)) == 1.0
    # continuous across the horizon
    assert vertex_correlator(2.0, 1.0, vp) == pytest.approx(
        vertex_correlator(2.0 + 1e-12, 1.0, vp), rel=1e-9
    )
    with pytest.raises(ValueError):
        VertexParams(q=math.nan, m0=1.0)
    with pytest.raises(ValueError):
        VertexParams(q=1.0, m0=0.0)
