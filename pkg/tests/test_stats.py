import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from conftest import XI_E_H6
from czirok.errors import NoCoherentClusterError
from czirok.model import SwarmState
from czirok.stats import (RunSeries, centered_l2_discrepancy, centered_l2_discrepancy_direct,
                          cluster_velocity, count_transitions, fluctuation_covariance_test,
                          fourier_phase_track, kde_grid, mean_velocity, periodic_kde, time_average,
                          uniform_discrepancy_mean)

L = 10.0
inner_positions = st.lists(st.floats(min_value=0.0, max_value=L, exclude_min=True, exclude_max=True),
                           min_size=1, max_size=40)


def step_function_integral(z):
    """int_0^1 (F_n(x) - x)^2 dx con F_n escalonada, tramo a tramo."""
    z = np.sort(z)
    n = len(z)
    edges = np.concatenate([[0.0], z, [1.0]])
    total = 0.0
    for k in range(n + 1):
        c, a, b = k / n, edges[k], edges[k + 1]
        total += ((c - a) ** 3 - (c - b) ** 3) / 3.0
    return total


def series_of(values, dt=0.1):
    values = np.asarray(values, dtype=float)
    return RunSeries(times=dt * np.arange(len(values)), mean_velocity=values)


# ---------------------------------------------------------------------------
# Velocidad media y series
# ---------------------------------------------------------------------------

def test_mean_velocity_examples():
    assert mean_velocity(SwarmState([1, 2, 3], [1, 1, 1])) == 1
    assert mean_velocity(SwarmState([1, 2], [-2, 2])) == 0


def test_run_series_checks_lengths():
    with pytest.raises(ValueError):
        RunSeries(times=np.arange(3), mean_velocity=np.zeros(2))
    with pytest.raises(ValueError):
        RunSeries(times=np.arange(3), mean_velocity=np.zeros(3), discrepancy=np.zeros(4))


def test_run_series_frame_and_time_average():
    series = RunSeries(times=[0.0, 0.1, 0.2, 0.3], mean_velocity=[0.0, 1.0, 2.0, 3.0],
                       discrepancy=[0.1, 0.2, 0.3, 0.4])
    frame = series.to_frame()
    assert list(frame.columns) == ["step", "t", "mean_velocity", "discrepancy"]
    assert frame["step"].tolist() == [0, 1, 2, 3]
    assert time_average(series) == pytest.approx(1.5)
    assert time_average(series, "mean_velocity", last=2) == pytest.approx(2.5)
    assert time_average(series, "discrepancy") == pytest.approx(0.25)
    with pytest.raises(ValueError):
        time_average(series_of([1.0]), "discrepancy")


# ---------------------------------------------------------------------------
# Discrepancia
# ---------------------------------------------------------------------------

def test_discrepancy_single_point():
    assert centered_l2_discrepancy([5.0], L) == pytest.approx(1.0 / 12.0)
    assert centered_l2_discrepancy([0.0], L) == pytest.approx(1.0 / 3.0)
    assert centered_l2_discrepancy_direct([5.0], L) == pytest.approx(1.0 / 12.0)
    assert centered_l2_discrepancy_direct([0.0], L) == pytest.approx(1.0 / 3.0)


def test_discrepancy_matches_step_function_integral():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 21))
        x = rng.uniform(0, L, n)
        exact = step_function_integral(x / L)
        assert centered_l2_discrepancy(x, L) == pytest.approx(exact, abs=1e-10)
        assert centered_l2_discrepancy_direct(x, L) == pytest.approx(exact, abs=1e-10)


def test_sorted_and_direct_forms_agree():
    rng = np.random.default_rng(1)
    for n in (1, 2, 10, 300):
        x = rng.uniform(0, L, n)
        assert centered_l2_discrepancy(x, L) == pytest.approx(centered_l2_discrepancy_direct(x, L), abs=1e-12)


@given(inner_positions, st.randoms(use_true_random=False))
def test_discrepancy_invariances(xs, random):
    x = np.array(xs)
    base = centered_l2_discrepancy(x, L)
    assert base >= 0
    shuffled = list(xs)
    random.shuffle(shuffled)
    assert centered_l2_discrepancy(np.array(shuffled), L) == pytest.approx(base, rel=1e-9, abs=1e-12)
    assert centered_l2_discrepancy(L - x, L) == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_uniform_discrepancy_mean_values():
    assert uniform_discrepancy_mean(500) == pytest.approx(1.0 / 3000.0)
    assert uniform_discrepancy_mean(1) == pytest.approx(1.0 / 6.0)
    assert uniform_discrepancy_mean(2000) == pytest.approx(8.3333e-5, rel=1e-4)
    with pytest.raises(ValueError):
        uniform_discrepancy_mean(0)


def test_uniform_samples_have_expected_discrepancy():
    rng = np.random.default_rng(3)
    values = np.array([centered_l2_discrepancy(rng.uniform(0, L, 500), L) for _ in range(10_000)])
    se = values.std(ddof=1) / math.sqrt(len(values))
    assert abs(values.mean() - uniform_discrepancy_mean(500)) < 3 * se


# ---------------------------------------------------------------------------
# KDE y clusters
# ---------------------------------------------------------------------------

def periodic_mass(density, grid=256):
    dx = L / grid
    return trapezoid(np.append(density, density[0]), dx=dx)


@given(inner_positions, st.floats(min_value=0.05, max_value=3.0))
def test_kde_mass_is_one(xs, bandwidth):
    density = periodic_kde(xs, L, bandwidth)
    assert np.all(density >= 0)
    assert periodic_mass(density) == pytest.approx(1.0, abs=1e-6)


def test_kde_of_uniform_sample_is_flat():
    x = np.random.default_rng(4).uniform(0, L, 1_000_000)
    density = periodic_kde(x, L, bandwidth=L / 20)
    assert np.max(np.abs(density - 1.0 / L)) < 0.02 / L


def test_kde_peak_at_point_mass():
    density = periodic_kde(np.full(50, 3.3), L)
    assert np.argmax(density) == int(3.3 / (L / 256))


def test_kde_translation_equivariance():
    dx = L / 256
    cells = np.random.default_rng(5).integers(0, 256, 40)
    x = (cells + 0.5) * dx
    shifted = ((cells + 7) % 256 + 0.5) * dx
    np.testing.assert_allclose(periodic_kde(shifted, L), np.roll(periodic_kde(x, L), 7), atol=1e-12)


def exact_wrapped_kde(x, bandwidth, grid=256):
    offsets = kde_grid(L, grid)[:, None, None] - x[None, :, None] + L * np.arange(-3, 4)[None, None, :]
    return np.exp(-0.5 * (offsets / bandwidth) ** 2).sum(axis=(1, 2)) / (x.size * bandwidth * np.sqrt(2 * np.pi))


@pytest.mark.parametrize("delta", [0.0, 0.013, 1.2345, 7.77])
def test_kde_matches_wrapped_gaussian_off_grid(delta):
    x = np.mod(np.random.default_rng(12).uniform(0, L, 50) + delta, L)
    exact = exact_wrapped_kde(x, L / 20)
    np.testing.assert_allclose(periodic_kde(x, L), exact, atol=2e-3 * exact.max())


def test_kde_validation():
    with pytest.raises(ValueError):
        periodic_kde([1.0], L, bandwidth=0.0)
    with pytest.raises(ValueError):
        periodic_kde([1.0], L, grid=8)
    assert kde_grid(L, 4).tolist() == [0.0, 2.5, 5.0, 7.5]


def rigid_cluster(velocity, times, seed=6):
    rng = np.random.default_rng(seed)
    offsets = 0.1 * rng.standard_normal(300)
    return [(t, np.mod(2.0 + velocity * t + offsets, L)) for t in times]


def test_cluster_velocity_moving_cluster():
    snaps = rigid_cluster(3.6, np.arange(0.0, 20.01, 0.5))
    assert cluster_velocity(snaps, L) == pytest.approx(3.6, abs=0.05)


def test_cluster_velocity_backwards_and_stationary():
    times = np.arange(0.0, 20.01, 0.5)
    assert cluster_velocity(rigid_cluster(-2.2, times), L) == pytest.approx(-2.2, abs=0.05)
    assert cluster_velocity(rigid_cluster(0.0, times), L) == pytest.approx(0.0, abs=0.05)


def test_cluster_velocity_rejects_uniform_positions():
    rng = np.random.default_rng(8)
    snaps = [(t, rng.uniform(0, L, 5000)) for t in np.arange(0.0, 10.01, 0.5)]
    with pytest.raises(NoCoherentClusterError):
        cluster_velocity(snaps, L)


def test_cluster_velocity_needs_enough_snapshots():
    with pytest.raises(ValueError):
        cluster_velocity(rigid_cluster(1.0, np.arange(5.0)), L)
    with pytest.raises(ValueError):
        cluster_velocity(rigid_cluster(1.0, np.linspace(0, 2, 20)), L)
    with pytest.raises(ValueError):
        cluster_velocity(rigid_cluster(1.0, np.arange(0.0, 20.01, 0.5)), L, method="centroid")


def two_bumps(velocity, times, seed=9):
    """Dos grupos casi iguales separados 3 unidades; el máximo de la KDE salta entre ellos."""
    rng = np.random.default_rng(seed)
    snaps = []
    for t in times:
        front = 2.0 + velocity * t + 0.3 * rng.standard_normal(300)
        back = -1.0 + velocity * t + 0.3 * rng.standard_normal(295)
        snaps.append((t, np.mod(np.concatenate([front, back]), L)))
    return snaps


def test_cluster_velocity_phase_ignores_bump_hopping():
    snaps = two_bumps(3.6, np.arange(0.0, 20.01, 0.5))
    assert cluster_velocity(snaps, L) == pytest.approx(3.6, abs=0.05)


def test_cluster_velocity_peak_method_on_rigid_cluster():
    snaps = rigid_cluster(3.6, np.arange(0.0, 20.01, 0.5))
    assert cluster_velocity(snaps, L, method="peak") == pytest.approx(3.6, abs=0.05)
    uniform = [(t, np.random.default_rng(3).uniform(0, L, 5000)) for t in np.arange(0.0, 10.01, 0.5)]
    with pytest.raises(NoCoherentClusterError):
        cluster_velocity(uniform, L, method="peak")


def test_fourier_phase_track_locates_cluster():
    snaps = rigid_cluster(0.0, [0.0])
    position, amplitude = fourier_phase_track(snaps, L)
    assert position[0] == pytest.approx(2.0, abs=0.02)
    assert amplitude[0] == pytest.approx(1.0, abs=0.01)


# ---------------------------------------------------------------------------
# Transiciones
# ---------------------------------------------------------------------------

def test_constant_series_has_no_transitions():
    report = count_transitions(series_of(np.full(200, XI_E_H6)), XI_E_H6)
    assert report.count == 0
    assert report.events == []


def test_square_wave_transitions():
    blocks = [XI_E_H6 * (-1) ** i for i in range(6)]
    series = series_of(np.repeat(blocks, 50))
    report = count_transitions(series, XI_E_H6)
    assert report.count == 5
    targets = [to for _, _, to in report.events]
    assert all(a == -b for a, b in zip(targets, targets[1:]))
    assert len(report.exit_times) == 5


def test_noise_inside_band_is_not_a_transition():
    values = [XI_E_H6, 0.5 * XI_E_H6, -0.5 * XI_E_H6, 0.9 * XI_E_H6, -0.79 * XI_E_H6, XI_E_H6]
    assert count_transitions(series_of(values), XI_E_H6).count == 0


def test_detector_validation():
    with pytest.raises(ValueError):
        count_transitions(series_of([1.0]), XI_E_H6, enter_frac=0.2, exit_frac=0.8)
    with pytest.raises(ValueError):
        count_transitions(series_of([1.0]), 0.0)


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=200),
       st.floats(min_value=0.3, max_value=1.0), st.floats(min_value=0.3, max_value=1.0))
def test_raising_enter_threshold_never_adds_transitions(values, e1, e2):
    lo, hi = sorted((e1, e2))
    series = series_of(values)
    assert count_transitions(series, XI_E_H6, hi, 0.2).count <= count_transitions(series, XI_E_H6, lo, 0.2).count


# ---------------------------------------------------------------------------
# Fluctuaciones
# ---------------------------------------------------------------------------

def test_fluctuation_constant_observable():
    one = lambda x, u: 1.0  # noqa: E731
    empirical, predicted, z = fluctuation_covariance_test(0.0, 1.0, L, one, one, 1000, 1000)
    assert abs(predicted) < 1e-8
    assert abs(empirical) < 1e-12
    assert z == 0.0


@pytest.mark.parametrize("name, f, expected", [
    ("velocity", lambda x, u: u, 2.0 ** 2 / 2.0),
    ("cosine", lambda x, u: np.cos(2 * np.pi * np.asarray(x) / L), 0.5),
])
def test_fluctuation_covariance_matches_prediction(name, f, expected):
    empirical, predicted, z = fluctuation_covariance_test(XI_E_H6, 2.0, L, f, f, 1000, 1000, seed=21)
    assert predicted == pytest.approx(expected, abs=1e-6)
    assert abs(z) <= 3


def test_fluctuation_requires_large_samples():
    with pytest.raises(ValueError):
        fluctuation_covariance_test(0.0, 1.0, L, lambda x, u: u, lambda x, u: u, 100, 1000)
