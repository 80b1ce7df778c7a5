import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import XI_E_H6, make_params
from czirok._rng import make_rng
from czirok.errors import RootBracketError
from czirok.model import (GSpec, KernelSpec, ModelParams, StationaryState, SwarmState,
                          compatibility_roots, euler_step, g_prime, kernel_fourier_coefficient,
                          sample_initial, simulate, stationary_states, torus_distance,
                          wrap_positions)

positions = st.floats(min_value=0.0, max_value=10.0, exclude_max=True)


@pytest.mark.parametrize("a, b, expected", [(0.5, 9.8, 0.7), (3.0, 3.0, 0.0), (0.0, 5.0, 5.0)])
def test_torus_distance_examples(a, b, expected):
    assert torus_distance(a, b, 10.0) == pytest.approx(expected, abs=1e-12)


@given(positions, positions)
def test_torus_distance_symmetric_and_bounded(a, b):
    d = torus_distance(a, b, 10.0)
    assert d == torus_distance(b, a, 10.0)
    assert 0.0 <= d <= 5.0


def test_wrap_positions_stays_in_range():
    x = wrap_positions(np.array([-1e-17, 10.0, 10.05, -0.3, 25.0]), 10.0)
    assert np.all((x >= 0) & (x < 10.0))
    assert x[2] == pytest.approx(0.05)
    assert x[3] == pytest.approx(9.7)


# ---------------------------------------------------------------------------
# G y núcleo
# ---------------------------------------------------------------------------

def test_cubic_formula():
    g = GSpec.cubic(6.0)
    assert g(1.0) == pytest.approx(7.0 / 5.0 - 6.0 / 125.0)
    assert g(2.0) == pytest.approx(1.4 * 2.0 - 6.0 / 125.0 * 8.0)


@given(st.floats(min_value=-20, max_value=20), st.floats(min_value=0, max_value=12))
def test_g_is_odd(u, h):
    for g in (GSpec.cubic(h), GSpec.tanh(h), GSpec.odd_polynomial([h, -0.1, 0.003])):
        assert g(-u) == pytest.approx(-g(u), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("g", [GSpec.cubic(6.0), GSpec.tanh(2.0), GSpec.odd_polynomial([1.2, -0.05])])
def test_potential_derivative_is_u_minus_g(g):
    u = np.linspace(-4, 4, 17)
    eps = 1e-6
    slope = (g.potential(u + eps) - g.potential(u - eps)) / (2 * eps)
    np.testing.assert_allclose(slope, u - g(u), atol=1e-6)
    assert g.potential(0.0) == pytest.approx(0.0, abs=1e-15)


def test_g_prime_examples():
    assert g_prime(GSpec.cubic(6.0), XI_E_H6) == pytest.approx(0.2)
    assert g_prime(GSpec.cubic(6.0), 0.0) == pytest.approx(1.4)
    assert g_prime(GSpec.tanh(2.0), 0.0) == pytest.approx(2.0)
    assert g_prime(GSpec.cubic(4.0), 0.0) == 1.0


def test_gspec_validation():
    with pytest.raises(ValueError):
        GSpec("quintic")
    with pytest.raises(ValueError):
        GSpec("cubic")


def test_kernel_amplitude_is_derived():
    assert KernelSpec.top_hat(1.0, 10.0).amplitude == 5.0
    assert KernelSpec.top_hat(2.5, 10.0).amplitude == 2.0
    with pytest.raises(ValueError):
        KernelSpec.top_hat(6.0, 10.0)
    with pytest.raises(ValueError):
        KernelSpec.top_hat(0.0, 10.0)


@pytest.mark.parametrize("r", [0.1, 1.0, 2.5, 5.0])
def test_kernel_normalization(r):
    k = KernelSpec.top_hat(r, 10.0)
    pieces = [(0.0, r), (r, 10.0 - r), (10.0 - r, 10.0)]
    total = sum(quad(lambda x: float(k.phi(torus_distance(x, 0.0, 10.0))), a, b, epsabs=1e-13)[0]
                for a, b in pieces if b > a)
    assert total / 10.0 == pytest.approx(1.0, abs=1e-10)


def test_kernel_fourier_coefficient_examples(kernel):
    assert kernel_fourier_coefficient(kernel, 0) == 1.0
    assert kernel_fourier_coefficient(kernel, 5) == pytest.approx(0.0, abs=1e-12)
    assert kernel_fourier_coefficient(kernel, 1) == pytest.approx(0.935489, abs=1e-6)
    assert kernel_fourier_coefficient(kernel, -3) == kernel_fourier_coefficient(kernel, 3)
    assert kernel_fourier_coefficient(KernelSpec.uniform(10.0), 2) == 0.0


@pytest.mark.parametrize("k", [1, 2, 3, 7])
def test_kernel_fourier_coefficient_matches_quadrature(kernel, k):
    value, _ = quad(lambda x: math.cos(2 * math.pi * k * x / 10.0), -1.0, 1.0, epsabs=1e-13)
    assert kernel_fourier_coefficient(kernel, k) == pytest.approx(kernel.amplitude * value / 10.0, abs=1e-10)


# ---------------------------------------------------------------------------
# Raíces de compatibilidad y estados estacionarios
# ---------------------------------------------------------------------------

def test_compatibility_roots_cubic_h6():
    roots = compatibility_roots(GSpec.cubic(6.0))
    assert roots == pytest.approx([-2.886751, 0.0, 2.886751], abs=1e-6)
    assert all(abs(xi - GSpec.cubic(6.0)(xi)) <= 1e-10 for xi in roots)


def test_compatibility_roots_cubic_h2_only_zero():
    assert compatibility_roots(GSpec.cubic(2.0)) == [0.0]


def test_compatibility_roots_tanh():
    roots = compatibility_roots(GSpec.tanh(2.0))
    assert roots == pytest.approx([-1.9150, 0.0, 1.9150], abs=1e-4)


@pytest.mark.parametrize("h", [4.00001, 4.000001, 4.0000001])
def test_compatibility_roots_below_first_scan_step(h):
    xi_e = 5.0 * math.sqrt((h - 4.0) / h)
    assert xi_e < 0.01
    roots = compatibility_roots(GSpec.cubic(h))
    assert len(roots) == 3
    assert roots[-1] == pytest.approx(xi_e, rel=1e-6)
    assert roots[0] == -roots[-1]


def test_compatibility_roots_tanh_just_above_one():
    roots = compatibility_roots(GSpec.tanh(1.0 + 1e-5))
    assert len(roots) == 3
    assert abs(roots[-1] - math.tanh(roots[-1]) * (1.0 + 1e-5)) <= 1e-10
    assert 0 < roots[-1] < 0.01


@given(st.floats(min_value=4.5, max_value=12))
def test_compatibility_roots_sign_symmetric(h):
    roots = compatibility_roots(GSpec.cubic(h))
    assert 0.0 in roots
    assert roots == [-x for x in reversed(roots)]
    assert roots[-1] == pytest.approx(5.0 * math.sqrt((h - 4.0) / h), abs=1e-8)


def test_compatibility_roots_bad_bracket():
    with pytest.raises(RootBracketError):
        compatibility_roots(GSpec.cubic(6.0), bracket=(1.0, 5.0))


def test_stationary_state_moments():
    state = StationaryState(XI_E_H6, 1.5, 10.0)
    mass = quad(state.velocity_density, -np.inf, np.inf)[0]
    mean = quad(lambda u: u * state.velocity_density(u), -np.inf, np.inf)[0]
    var = quad(lambda u: (u - XI_E_H6) ** 2 * state.velocity_density(u), -np.inf, np.inf)[0]
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert mean == pytest.approx(state.velocity_mean(), abs=1e-8)
    assert var == pytest.approx(state.velocity_variance(), abs=1e-8)
    assert state.velocity_variance() == pytest.approx(1.125)
    assert state.density(3.0, XI_E_H6) == pytest.approx(state.velocity_density(XI_E_H6) / 10.0)


def test_stationary_states_need_noise():
    assert [s.xi for s in stationary_states(GSpec.cubic(6.0), 1.0, 10.0)] == pytest.approx(
        [-XI_E_H6, 0.0, XI_E_H6], abs=1e-8)
    with pytest.raises(ValueError):
        StationaryState(0.0, 0.0, 10.0)


# ---------------------------------------------------------------------------
# Dinámica
# ---------------------------------------------------------------------------

def test_model_params_validation():
    with pytest.raises(ValueError):
        make_params(n=0)
    with pytest.raises(ValueError):
        make_params(sigma=-1.0)
    with pytest.raises(ValueError):
        ModelParams(n=3, L=10.0, sigma=1.0, dt=0.1, g=GSpec.cubic(6.0), kernel=KernelSpec.top_hat(1.0, 20.0))
    with pytest.raises(ValueError):
        make_params(averaging="median")


def test_euler_step_fixed_point():
    params = make_params(n=1, averaging="normalized")
    state = SwarmState([3.0], [XI_E_H6])
    nxt = euler_step(state, params, make_rng(0))
    assert nxt.u[0] == pytest.approx(XI_E_H6, abs=1e-9)
    assert nxt.x[0] == pytest.approx(3.0 + 0.1 * XI_E_H6)
    assert nxt.t == pytest.approx(0.1)


def test_euler_step_wraps():
    params = make_params(n=1, g=GSpec.odd_polynomial([0.0]))
    nxt = euler_step(SwarmState([9.95], [1.0]), params, make_rng(0))
    assert nxt.x[0] == pytest.approx(0.05)
    assert nxt.u[0] == pytest.approx(0.9)


def test_euler_step_arithmetic():
    params = make_params(n=2, averaging="normalized")
    nxt = euler_step(SwarmState([4.0, 4.0], [1.0, 1.0]), params, make_rng(0))
    np.testing.assert_allclose(nxt.u, [1.0352, 1.0352], atol=1e-12)


def test_positions_stay_on_torus():
    params = make_params(n=50, sigma=3.0)
    rng = make_rng(3)
    state = SwarmState(rng.uniform(0, 10, 50), 20.0 * rng.standard_normal(50))
    for _ in range(50):
        state = euler_step(state, params, rng)
        assert np.all((state.x >= 0) & (state.x < 10.0))


def test_mirror_equivariance_without_noise():
    params = make_params(n=30, averaging="symmetric")
    rng = np.random.default_rng(5)
    state = SwarmState(rng.uniform(0, 10, 30), rng.normal(0, 2, 30))
    forward, mirrored = state, state.mirrored(10.0)
    for _ in range(25):
        forward = euler_step(forward, params, make_rng(1))
        mirrored = euler_step(mirrored, params, make_rng(1))
    expected = forward.mirrored(10.0)
    assert np.max(torus_distance(expected.x, mirrored.x, 10.0)) < 1e-9
    np.testing.assert_allclose(mirrored.u, expected.u, atol=1e-9)


def test_sample_initial_moments():
    params = make_params(n=1_000_000, sigma=2.0)
    state = sample_initial(0.0, params, make_rng(11))
    assert abs(state.u.mean()) < 3 * (2.0 / math.sqrt(2.0)) / 1e3
    assert state.u.var() == pytest.approx(2.0, rel=0.01)
    assert abs(state.x.mean() - 5.0) < 3 * (10.0 / math.sqrt(12.0)) / 1e3
    assert np.all((state.x >= 0) & (state.x < 10.0))


def test_sample_initial_shifted_mean():
    params = make_params(n=1_000_000, sigma=2.0)
    state = sample_initial(XI_E_H6, params, make_rng(12))
    assert abs(state.u.mean() - XI_E_H6) < 3 * (2.0 / math.sqrt(2.0)) / 1e3
    assert state.u.var() == pytest.approx(2.0, rel=0.01)


def test_simulate_zero_steps():
    params = make_params(n=20, sigma=1.0, steps=0)
    init = sample_initial(0.0, params, make_rng(0))
    series = simulate(params, init)
    assert len(series) == 1
    assert series.mean_velocity[0] == pytest.approx(init.u.mean())
    assert series.discrepancy[0] >= 0


def test_simulate_fixed_point_is_constant():
    params = make_params(n=8, averaging="normalized", steps=30)
    init = SwarmState(np.full(8, 2.0), np.full(8, XI_E_H6))
    series = simulate(params, init)
    np.testing.assert_allclose(series.mean_velocity, XI_E_H6, atol=1e-8)


def test_simulate_is_bit_reproducible():
    params = make_params(n=100, sigma=2.0, steps=50, seed=99)
    runs = []
    for _ in range(2):
        init = sample_initial(0.0, params, make_rng(params.seed))
        runs.append(simulate(params, init, observers=("mean_velocity", "discrepancy", "positions"),
                             snapshot_every=10))
    a, b = runs
    assert a.mean_velocity.tobytes() == b.mean_velocity.tobytes()
    assert a.discrepancy.tobytes() == b.discrepancy.tobytes()
    assert len(a.position_snapshots) == 6
    assert all(np.array_equal(xa, xb) for (_, xa), (_, xb) in zip(a.position_snapshots, b.position_snapshots))
    assert a.meta["seed"] == 99


def test_simulate_rejects_bad_input():
    params = make_params(n=5, steps=1)
    with pytest.raises(ValueError):
        simulate(params, SwarmState(np.zeros(4), np.zeros(4)))
    with pytest.raises(ValueError):
        simulate(params, SwarmState(np.full(5, 10.0), np.zeros(5)))
    with pytest.raises(ValueError):
        simulate(params, SwarmState(np.zeros(5), np.zeros(5)), observers=("energy",))
