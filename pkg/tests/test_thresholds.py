import math

import pytest
from hypothesis import assume, given, settings
import hypothesis.strategies as st

from errors import InfeasibleThresholdError, IntervalUndefinedError, ParameterError
from thresholds import (ALTERNATE, PRINTED, ErrorSpec, Rectangle, compare_variants, coupled_residual,
                        default_l1, induce_fourth_alpha, l1_feasible_interval, rectangle_residuals,
                        solve_rectangle, threshold_table)

small_alpha = st.floats(0.005, 0.3)


@given(small_alpha, small_alpha, small_alpha)
@settings(max_examples=100, deadline=None)
def test_fourth_alpha_satisfies_constraint(a00, a01, a10):
    assume((1 - a01) * (1 - a10) / (1 - a00) < 1.0)
    a11 = induce_fourth_alpha(a00, a01, a10)
    assert 0.0 < a11 < 1.0
    assert abs((1 - a00) * (1 - a11) - (1 - a01) * (1 - a10)) < 1e-12


@given(st.floats(0.01, 0.1), st.floats(0.01, 0.1), st.floats(0.01, 0.1))
@settings(max_examples=100, deadline=None)
def test_rectangle_solves_all_relations(a00, a01, gap):
    errors = ErrorSpec.from_three(a00, a01, a00 + gap)
    rect = solve_rectangle(errors, variant=PRINTED)
    residuals = rectangle_residuals(errors, rect, PRINTED)
    assert all(abs(v) < 1e-10 for v in residuals.values()), residuals


def test_symmetric_alphas_give_symmetric_intervals():
    for variant in (PRINTED, ALTERNATE):
        rect = solve_rectangle(ErrorSpec.symmetric(0.05), variant=variant)
        assert rect.l1 == pytest.approx(-rect.r1, abs=1e-12)
        assert rect.l2 == pytest.approx(-rect.r2, abs=1e-10)


def test_default_l1_for_equal_alphas():
    assert default_l1(0.05, 0.05) == pytest.approx(math.log(0.05 / 0.95) - math.log(2.0))
    lo, hi = l1_feasible_interval(0.05, 0.15)
    assert default_l1(0.05, 0.15) == pytest.approx(0.5 * (lo + hi))


def _closed_form_r2(errors, r1, variant):
    c1 = (1 - errors.alpha_10) / (1 - errors.alpha_00)
    k = 1.0 + c1 * math.exp(-r1)
    if variant == PRINTED:
        return math.log(k * (2 - errors.alpha_01) / (1 + k * errors.alpha_00))
    return math.log(k * (1 - errors.alpha_01) / (1 - k * (1 - errors.alpha_00)))


@pytest.mark.parametrize("variant", [PRINTED, ALTERNATE])
def test_r2_matches_closed_form(variant):
    errors = ErrorSpec.symmetric(0.05)
    rect = solve_rectangle(errors, variant=variant)
    assert rect.r2 == pytest.approx(_closed_form_r2(errors, rect.r1, variant), abs=1e-10)


def test_variant_values_at_five_percent():
    both = compare_variants(ErrorSpec.symmetric(0.05))
    assert both[ALTERNATE]["r2"] == pytest.approx(math.log(39.0), abs=1e-9)
    assert 0.6 < both[PRINTED]["r2"] < 0.7


def test_coupled_residual_rejects_unknown_variant():
    with pytest.raises(ParameterError):
        coupled_residual(ErrorSpec.symmetric(0.05), 3.0, "other")


def test_infeasible_alphas():
    with pytest.raises(InfeasibleThresholdError):
        induce_fourth_alpha(0.5, 0.01, 0.01)
    with pytest.raises(InfeasibleThresholdError):
        ErrorSpec.from_three(0.5, 0.01, 0.01)
    with pytest.raises(ParameterError):
        induce_fourth_alpha(0.0, 0.1, 0.1)


def test_l1_interval():
    lo, hi = l1_feasible_interval(0.05, 0.10)
    assert lo == pytest.approx(math.log(0.05 / 0.95))
    assert hi == pytest.approx(math.log(0.10 / 0.95))
    with pytest.raises(IntervalUndefinedError):
        l1_feasible_interval(0.10, 0.05)


def test_l1_outside_interval_is_infeasible():
    errors = ErrorSpec.from_three(0.05, 0.05, 0.10)
    with pytest.raises(InfeasibleThresholdError):
        solve_rectangle(errors, l1=-0.5)


def test_error_spec_checks_constraint():
    with pytest.raises(ParameterError):
        ErrorSpec(0.05, 0.05, 0.05, 0.2)
    errors = ErrorSpec.from_three(0.05, 0.04, 0.10)
    assert errors.world("01") == 0.04
    assert set(errors.to_dict()) == {"00", "01", "10", "11"}


def test_rectangle_geometry():
    rect = Rectangle(-1.0, 2.0, -0.5, 0.5)
    assert rect.bounds(1) == (-0.5, 0.5)
    assert rect.contains(0.0, 0.0) and not rect.contains(2.5, 0.0)
    with pytest.raises(ParameterError):
        Rectangle(0.5, 1.0, -1.0, 1.0)


def test_threshold_table_grows_as_alpha_shrinks():
    table = threshold_table([0.1, 0.05, 0.01])
    assert list(table.columns) == ["alpha", "variant", "l1", "r1", "l2", "r2"]
    assert table["r1"].is_monotonic_increasing
    assert (table["l1"] + table["r1"]).abs().max() < 1e-12
