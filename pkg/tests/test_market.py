import math

import numpy as np
import pandas as pd
import pytest

from errors import LoadError, ParameterError
from generate_sample import generate_sample_data
from levy_sim import JumpMeasureSpec
from market import (LOG_RETURNS, REFERENCE_TOL, BnsParams, FitResult, PriceSeries, binomial_band,
                    estimate_jump_statistic, fit_parameters, load_prices, paper_dataset, run_oil_experiment,
                    save_prices, simulate_bns, simulate_bns_classical, simulate_llr_runs)


def _write(tmp_path, text, name="prices.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _bns(**kw):
    base = dict(mu=0.0, beta=0.0, rho=-1.0, lam=1.0, theta=1.0, theta_prime=1.0, sigma0_sq=0.04,
                z_spec=JumpMeasureSpec.exponential(1.0, 0.01), zb_spec=JumpMeasureSpec.exponential(2.0, 0.05))
    base.update(kw)
    return BnsParams(**base)


def test_missing_price_file(tmp_path):
    with pytest.raises(LoadError):
        load_prices(tmp_path / "nope.csv")


def test_bad_header_is_row_one(tmp_path):
    path = _write(tmp_path, "day,price\n2023-01-02,70\n2023-01-03,71\n")
    with pytest.raises(LoadError) as exc:
        load_prices(path)
    assert exc.value.row == 1


def test_malformed_price_names_its_row(tmp_path):
    path = _write(tmp_path, "date,close\n2023-01-02,70\n2023-01-03,abc\n")
    with pytest.raises(LoadError) as exc:
        load_prices(path)
    assert exc.value.row == 3
    assert "row 3" in str(exc.value)


def test_nonpositive_price_and_duplicate_date(tmp_path):
    with pytest.raises(LoadError):
        load_prices(_write(tmp_path, "date,close\n2023-01-02,70\n2023-01-03,-1\n"))
    with pytest.raises(LoadError) as exc:
        load_prices(_write(tmp_path, "date,close\n2023-01-02,70\n2023-01-02,71\n", "dup.csv"))
    assert exc.value.row == 3


def test_unsorted_dates_are_sorted(tmp_path):
    series = load_prices(_write(tmp_path, "date,close\n2023-01-04,72\n2023-01-02,70\n2023-01-03,71\n"))
    assert list(series.close) == [70.0, 71.0, 72.0]
    assert series.dates.is_monotonic_increasing


def test_save_and_load(tmp_path):
    series = PriceSeries(dates=pd.bdate_range("2024-03-01", periods=4), close=np.array([1.5, 2.0, 1.25, 3.0]))
    back = load_prices(save_prices(series, tmp_path / "out" / "p.csv"))
    assert np.array_equal(back.close, series.close)
    assert list(back.dates) == list(series.dates)


def test_load_export_load_is_bit_identical(tmp_path):
    close = np.random.default_rng(5).uniform(10.0, 100.0, 60) / 3.0
    first = PriceSeries(dates=pd.bdate_range("2022-01-03", periods=60), close=close)
    loaded = load_prices(save_prices(first, tmp_path / "a.csv"))
    again = load_prices(save_prices(loaded, tmp_path / "b.csv"))
    assert np.array_equal(loaded.close, close)
    assert np.array_equal(again.close, loaded.close)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_fit_on_alternating_series():
    close = 10.0 + np.arange(41) % 2
    series = PriceSeries(dates=pd.bdate_range("2023-01-02", periods=41), close=close)
    fit = fit_parameters(series)
    assert fit.n_returns == 40
    assert fit.mu_hat == pytest.approx(0.0, abs=1e-12)
    assert fit.sigma_hat == pytest.approx(math.sqrt(40 / 39))
    assert not fit.degenerate
    logs = fit_parameters(series, on=LOG_RETURNS)
    assert logs.sigma_hat == pytest.approx(np.std(np.diff(np.log(close)), ddof=1))


def test_fit_needs_enough_returns():
    series = PriceSeries(dates=pd.bdate_range("2023-01-02", periods=10), close=np.linspace(1.0, 2.0, 10))
    with pytest.raises(ParameterError):
        fit_parameters(series)
    with pytest.raises(ParameterError):
        fit_parameters(series, on="levels", min_returns=2)


def test_flat_series_is_degenerate():
    series = PriceSeries(dates=pd.bdate_range("2023-01-02", periods=40), close=np.full(40, 5.0))
    fit = fit_parameters(series)
    assert fit.degenerate
    assert estimate_jump_statistic(series, fit) == 0.0


def test_generated_sample_loads(tmp_path):
    path = generate_sample_data(n=250, out_file=tmp_path / "sample.csv")
    series = load_prices(path)
    fit = fit_parameters(series)
    assert fit.n_returns == 249
    assert fit.sigma_hat > 0
    assert estimate_jump_statistic(series, fit) >= 0.0


def test_binomial_band_contains_rate():
    lo, hi = binomial_band(30, 0.2)
    assert lo <= 6 <= hi
    assert 0 <= lo and hi <= 30


def test_paper_dataset():
    assert paper_dataset(1)["a"] == 19.0
    assert paper_dataset(2)["l"] == -0.1
    with pytest.raises(ParameterError):
        paper_dataset(3)


def test_bns_reduces_to_classical():
    params = _bns()
    mixed = simulate_bns(params, horizon=5.0, dt=0.01, seed=11)
    classical = simulate_bns_classical(params, horizon=5.0, dt=0.01, seed=11)
    assert np.array_equal(mixed.price, classical.price)
    assert np.array_equal(mixed.variance, classical.variance)


def test_bns_mixed_paths():
    path = simulate_bns(_bns(theta=0.5, theta_prime=0.3), horizon=5.0, dt=0.01, seed=12)
    frame = path.to_frame()
    assert list(frame.columns) == ["time", "price", "log_price", "variance"]
    assert (frame["variance"] > 0).all()
    assert frame["price"].iloc[0] == pytest.approx(1.0)


def test_bns_params_validation():
    with pytest.raises(ParameterError):
        _bns(rho=0.5)
    with pytest.raises(ParameterError):
        _bns(theta=1.5)
    with pytest.raises(ParameterError):
        _bns(zb_spec=JumpMeasureSpec.exponential(0.5, 0.05))
    assert _bns().expected_variance(0.0) == 0.04


def test_oil_experiment_structure():
    preset = paper_dataset(1)
    fit = FitResult(mu_hat=preset["mu"], sigma_hat=preset["sigma"], n_returns=0)
    reference = max(preset["r_candidates"])
    report = run_oil_experiment(fit, preset["a"], preset["alpha0"], preset["l"], n_runs=5, dt=1e-4,
                                horizon=5.0, reference_exits=preset["right_exits"], reference_r=reference)
    assert sum(report.exits.values()) == 5
    assert len(report.outcomes) == 5
    assert set(report.band) == {"reference", "low", "high", "inside"}
    assert set(report.to_dict()) >= {"fit", "coefficients", "envelope", "exits", "audit",
                                     "reference_r", "r_discrepancy", "reference_met"}
    assert report.reference_r == reference
    if report.r is None:
        assert report.reference_met is False
        assert report.audit[-1]["stage"] == "rectangle_from_envelopes"
        return
    # max rule over the two envelope candidates, each solved once in one dimension
    assert report.r == max(report.r_candidates)
    assert len(report.r_candidates) == 2
    assert [row["envelope"] for row in report.audit] == ["upper", "lower"]
    assert {row["r"] for row in report.audit} == set(report.r_candidates)
    assert all(row["target"] == pytest.approx(1.0 - preset["alpha0"]) for row in report.audit)
    assert report.r_discrepancy == pytest.approx(report.r - reference, abs=1e-15)
    assert report.r_ratio == pytest.approx(reference / report.r)
    assert report.reference_met == (abs(report.r_discrepancy) <= REFERENCE_TOL)


def test_oil_report_without_reference_leaves_gap_empty():
    fit = FitResult(mu_hat=0.0, sigma_hat=1.0, n_returns=0)
    report = run_oil_experiment(fit, 1.0, 0.9, -0.5, n_runs=2, dt=1e-3, horizon=1.0)
    assert report.reference_r is None
    assert report.r_discrepancy is None
    assert report.reference_met is None


def test_oil_experiment_rejects_bad_inputs():
    fit = FitResult(mu_hat=0.0, sigma_hat=1.0, n_returns=0)
    with pytest.raises(ParameterError):
        run_oil_experiment(fit, 1.0, 0.9, l=0.1, n_runs=2)
    with pytest.raises(ParameterError):
        run_oil_experiment(FitResult(mu_hat=0.0, sigma_hat=0.0, n_returns=0), 1.0, 0.9, -0.1)


def test_llr_runs_stop_at_exit():
    fit = FitResult(mu_hat=0.0, sigma_hat=1.0, n_returns=0)
    runs = simulate_llr_runs(fit, a=1.0, l=-0.5, r=0.5, n_runs=3, dt=1e-3, horizon=2.0, seed=4)
    assert set(runs["run"]) == {0, 1, 2}
    for _, frame in runs.groupby("run"):
        inner = frame["value"].iloc[:-1]
        assert ((inner >= -0.5) & (inner <= 0.5)).all()


def _terminal(params, n, seed):
    paths = [simulate_bns(params, horizon=1.0, dt=0.05, seed=seed, path_index=k) for k in range(n)]
    return np.array([p.variance[-1] for p in paths]), np.array([p.log_price[-1] for p in paths])


def test_bns_terminal_variance_mean_matches_closed_form():
    params = _bns(lam=2.0, theta=0.4, theta_prime=0.5,
                  z_spec=JumpMeasureSpec.exponential(3.0, 0.05), zb_spec=JumpMeasureSpec.exponential(6.0, 0.02))
    var_t, _ = _terminal(params, 3000, seed=21)
    se = var_t.std(ddof=1) / math.sqrt(var_t.size)
    assert abs(var_t.mean() - params.expected_variance(1.0)) < 3 * se


def test_bns_without_jumps_decays_deterministically():
    params = _bns(beta=0.0, lam=1.7, z_spec=JumpMeasureSpec(), zb_spec=JumpMeasureSpec())
    path = simulate_bns(params, horizon=3.0, dt=0.01, seed=2)
    assert np.allclose(path.variance, 0.04 * np.exp(-1.7 * path.times), rtol=0.0, atol=1e-10)
    assert path.variance[-1] == pytest.approx(params.expected_variance(3.0), abs=1e-10)


def test_bns_mixing_weights_swap_with_subordinators():
    # theta on (S, 0) and 1 - theta on (0, S) put the same jumps into X and sigma^2
    spec = JumpMeasureSpec.exponential(3.0, 0.1)
    here = _bns(theta=0.3, theta_prime=0.6, z_spec=spec, zb_spec=JumpMeasureSpec())
    there = _bns(theta=0.7, theta_prime=0.4, z_spec=JumpMeasureSpec(), zb_spec=spec)
    var_a, x_a = _terminal(here, 4000, seed=31)
    var_b, x_b = _terminal(there, 4000, seed=32)
    for a, b in ((var_a, var_b), (x_a, x_b)):
        se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        assert abs(a.mean() - b.mean()) < 3 * se
