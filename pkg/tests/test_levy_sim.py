import math

import numpy as np
import pytest
from scipy import stats

from errors import ParameterError, UnsupportedMeasureError
from levy_sim import (JumpMeasureSpec, LevyCharacteristics, SamplePath, covariance_root, euler_grid,
                      make_rng, sample_increments, simulate_bm_drift, simulate_compound_poisson,
                      simulate_levy, simulate_levy2d)


def test_rng_streams_are_reproducible_and_distinct():
    a = make_rng(7, 0, 1).standard_normal(5)
    b = make_rng(7, 0, 1).standard_normal(5)
    c = make_rng(7, 0, 2).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_euler_grid_ends_at_horizon():
    grid = euler_grid(1.0, 0.3)
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert grid.size == 5


def test_bm_path_frame():
    path = simulate_bm_drift(0.5, 1.0, horizon=1.0, dt=0.01, seed=3)
    frame = path.to_frame()
    assert list(frame.columns) == ["time", "value", "is_jump"]
    assert len(frame) == 101
    assert frame["value"].iloc[0] == 0.0
    assert not frame["is_jump"].any()


def test_bm_without_noise_is_a_line():
    path = simulate_bm_drift(2.0, 0.0, horizon=3.0, dt=0.5)
    assert np.allclose(path.values, 2.0 * path.times)


def test_compound_poisson_is_piecewise_constant():
    spec = JumpMeasureSpec.exponential(intensity=5.0, scale=0.2)
    path = simulate_compound_poisson(spec, horizon=10.0, seed=11, dt=0.1)
    steps = np.diff(path.values)
    jumps = path.is_jump[1:]
    assert np.all(steps[~jumps] == 0.0)
    assert np.all(steps[jumps] > 0.0)
    assert path.jump_indices.size == int(path.is_jump.sum())


def test_compound_poisson_mean_increment():
    chars = LevyCharacteristics(0.0, 0.0, JumpMeasureSpec.exponential(intensity=2.0, scale=0.5))
    inc = sample_increments(chars, 1.0, 100_000, make_rng(5))
    # mean lambda * eta = 1, variance lambda * 2 eta^2 = 1
    assert inc.mean() == pytest.approx(1.0, abs=0.015)


def test_tilted_exponential_sampler_mean():
    spec = JumpMeasureSpec.exponential(intensity=1.0, scale=1.0, tilt_a=1.0)
    draws = spec.sample(make_rng(9), 100_000)
    assert spec.moment(1) / spec.total_mass() == pytest.approx(1.5)
    assert draws.mean() == pytest.approx(1.5, abs=0.02)


def test_quantile_sampler_matches_exact_sampler(unit_exp):
    rng = make_rng(13)
    exact = unit_exp.sample(rng, 20_000)
    by_table = unit_exp.quantile(rng.random(20_000))
    assert stats.ks_2samp(exact, by_table).pvalue > 1e-3


def test_tabulated_sampler_mean():
    spec = JumpMeasureSpec.tabulated([0.0, 2.0], [0.5, 0.5])
    draws = spec.sample(make_rng(17), 50_000)
    assert draws.min() >= 0.0 and draws.max() <= 2.0
    assert draws.mean() == pytest.approx(1.0, abs=0.02)


def test_point_mass_concentrates():
    spec = JumpMeasureSpec.point_mass(0.7, mass=2.0, width=1e-3)
    assert spec.total_mass() == pytest.approx(2.0, rel=1e-6)
    assert spec.sample(make_rng(1), 1000) == pytest.approx(0.7, abs=1e-3)


def test_zero_measure_cannot_be_sampled():
    with pytest.raises(UnsupportedMeasureError):
        JumpMeasureSpec().sample(make_rng(0), 3)


def test_measure_validation():
    with pytest.raises(UnsupportedMeasureError):
        JumpMeasureSpec.exponential(intensity=math.inf)
    with pytest.raises(ParameterError):
        JumpMeasureSpec.exponential(intensity=1.0, scale=0.0)
    with pytest.raises(ParameterError):
        JumpMeasureSpec.tabulated([1.0, 0.5], [1.0, 1.0])


def test_compensation_shifts_drift_only():
    jumps = JumpMeasureSpec.exponential(intensity=3.0, scale=0.5)
    chars = LevyCharacteristics(drift=0.2, diffusion_var=0.5, jumps=jumps)
    plain = simulate_levy(chars, horizon=2.0, dt=0.01, seed=21)
    comp = simulate_levy(chars, horizon=2.0, dt=0.01, seed=21, compensate=True)
    assert np.array_equal(plain.times, comp.times)
    assert np.allclose(plain.values - comp.values, chars.compensator() * plain.times)


def test_negative_jump_sign_moves_down():
    chars = LevyCharacteristics(0.0, 0.0, JumpMeasureSpec.exponential(4.0), jump_sign=-1)
    path = simulate_levy(chars, horizon=5.0, dt=0.1, seed=2)
    assert np.all(np.diff(path.values) <= 0.0)
    assert path.terminal < 0.0


def test_levy_path_start_value():
    chars = LevyCharacteristics(0.0, 1.0)
    path = simulate_levy(chars, horizon=1.0, dt=0.1, start=0.25)
    assert path.values[0] == 0.25 and path.start == 0.25


def test_grid_validation():
    chars = LevyCharacteristics(0.0, 1.0)
    with pytest.raises(ParameterError):
        simulate_levy(chars, horizon=1.0, dt=0.0)
    with pytest.raises(ParameterError):
        simulate_levy(chars, horizon=0.01, dt=0.1)
    with pytest.raises(ParameterError):
        LevyCharacteristics(0.0, -1.0)


def test_sample_path_checks_alignment():
    with pytest.raises(ParameterError):
        SamplePath(times=np.array([0.0, 1.0]), values=np.array([0.0]), dt=1.0)
    with pytest.raises(ParameterError):
        SamplePath(times=np.array([0.0, 0.0]), values=np.array([0.0, 1.0]), dt=1.0)


def test_covariance_root():
    s = np.array([[2.0, 0.6], [0.6, 1.0]])
    root = covariance_root(s)
    assert np.allclose(root @ root, s)
    assert np.allclose(covariance_root(np.array([[1.0, 1.0], [1.0, 1.0]])) @
                       covariance_root(np.array([[1.0, 1.0], [1.0, 1.0]])), np.ones((2, 2)))
    with pytest.raises(ParameterError):
        covariance_root(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ParameterError):
        covariance_root(np.array([[1.0, 0.2], [0.3, 1.0]]))


def test_levy2d_correlation_and_frame():
    sigma = np.array([[1.0, 0.6], [0.6, 1.0]])
    path = simulate_levy2d((0.0, 0.0), sigma, (None, None), horizon=100.0, dt=0.01, seed=4)
    d1, d2 = np.diff(path.first.values), np.diff(path.second.values)
    assert np.corrcoef(d1, d2)[0, 1] == pytest.approx(0.6, abs=0.05)
    frame = path.to_frame()
    assert list(frame.columns) == ["time", "value", "value2", "is_jump"]


def test_levy2d_jumps_land_on_shared_grid():
    specs = (JumpMeasureSpec.exponential(2.0), JumpMeasureSpec.exponential(1.0))
    path = simulate_levy2d((0.0, 0.0), np.zeros((2, 2)), specs, horizon=5.0, dt=0.5, seed=8)
    assert np.array_equal(path.first.times, path.second.times)
    assert np.all(np.diff(path.first.values) >= 0.0)
    # jump epochs join the grid, so there are more points than grid nodes
    assert path.times.size > 11


def test_diffusion_increments_are_stationary():
    chars = LevyCharacteristics(0.3, 2.0)
    passed = 0
    for seed in range(40):
        inc = np.diff(simulate_levy(chars, horizon=20.0, dt=0.01, seed=seed).values)
        half = inc.size // 2
        passed += stats.ks_2samp(inc[:half], inc[half:]).pvalue > 0.01
    assert passed >= 38


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_subordinator_paths_never_decrease(seed):
    spec = JumpMeasureSpec.exponential(intensity=4.0, scale=0.3, tilt_a=1.0)
    assert np.all(np.diff(simulate_compound_poisson(spec, horizon=25.0, seed=seed, dt=0.05).values) >= 0.0)
    path = simulate_levy(LevyCharacteristics(0.0, 0.0, spec, jump_sign=1), horizon=25.0, dt=0.05, seed=seed)
    assert np.all(np.diff(path.values) >= 0.0)
    assert path.values[-1] > 0.0
