import math

import numpy as np
import pytest
from scipy import integrate

from errors import InfeasibleError, ParameterError
from generators import check_partials
from levy_sim import JumpMeasureSpec
from likelihood import WORLDS, JumpTestParams, jump_llr_coefficients
from supersub import (LOWER, UPPER, EnvelopeParams, compensator_constant, compensator_constant_1d,
                      default_envelope_params, envelope_cross_sections, envelope_grid, envelope_params_1d,
                      envelope_parts, envelope_pide_sign_check, envelope_test_function, eval_envelopes,
                      gap_sup_norm, rectangle_from_envelopes)
from thresholds import ErrorSpec


def _no_jump_params(world="00", L=0.5):
    return EnvelopeParams(beta=(0.8, 1.2), gamma=(0.3, -0.2), C=(0.0, 0.0), M=0.0, K_bound=0.0,
                          L_const=L, bounds=((-1.0, 1.0), (-1.5, 2.0)), world=world)


@pytest.fixture(scope="module")
def default_params():
    return {w: default_envelope_params(w) for w in WORLDS}


@pytest.mark.parametrize("world", WORLDS)
def test_envelopes_are_ordered_and_nonnegative(default_params, world):
    grid = envelope_grid(default_params[world], 64)
    assert len(grid) == 64 * 64
    assert (grid["lower"] >= -1e-12).all()
    assert (grid["lower"] <= grid["upper"] + 1e-12).all()


@pytest.mark.parametrize("world", WORLDS)
def test_boundary_values(default_params, world):
    params = default_params[world]
    (l1, r1), (l2, r2) = params.bounds
    i, j = int(world[0]), int(world[1])
    own = ((l1, r1)[i], (l2, r2)[j])
    far = ((l1, r1)[1 - i], (l2, r2)[1 - j])
    value = eval_envelopes(params, *own)
    assert float(value.lower) == pytest.approx(1.0, abs=1e-12)
    assert float(value.upper) == pytest.approx(1.0, abs=1e-12)
    ys = np.linspace(l2, r2, 9)
    xs = np.linspace(l1, r1, 9)
    for val in (eval_envelopes(params, np.full_like(ys, far[0]), ys),
                eval_envelopes(params, xs, np.full_like(xs, far[1]))):
        assert np.max(np.abs(val.lower)) < 1e-12
        assert np.max(np.abs(val.upper)) < 1e-12


def test_gap_grows_with_L(default_params):
    params = default_params["00"]
    gaps = [gap_sup_norm(params.with_L(L), 64) for L in (1e-6, 1e-3, 1e-1)]
    assert gaps[0] < gaps[1] < gaps[2]


def test_default_L_is_jump_mass(default_params):
    params = default_params["11"]
    assert params.M > 0
    assert params.L_const == pytest.approx(max(params.K_bound, 1.0) * params.M)
    assert 0.0 <= params.K_bound <= 1.0


@pytest.mark.parametrize("world", WORLDS)
def test_separated_identity_without_jumps(world):
    report = envelope_pide_sign_check(_no_jump_params(world), grid_n=8, worlds=[world])
    entry = report["worlds"][world]
    assert entry[UPPER]["identity_error"] < 1e-8
    assert entry[LOWER]["identity_error"] < 1e-8
    # -L * U < 0 and +L * L_env > 0 inside the rectangle
    assert entry[UPPER]["pattern"] == "-"
    assert entry[LOWER]["pattern"] == "+"


def test_sign_check_with_jumps_reports_every_world(default_params):
    report = envelope_pide_sign_check(default_params["00"], grid_n=8)
    assert set(report["worlds"]) == set(WORLDS)
    for entry in report["worlds"].values():
        for which in (UPPER, LOWER):
            counts = entry[which]
            assert counts["positive"] + counts["negative"] + counts["zero"] == 64


def test_sign_pattern_matches_across_the_same_class():
    params = _no_jump_params(L=0.3)
    report = envelope_pide_sign_check(params, grid_n=8, worlds=["00", "11", "01", "10"])
    worlds = report["worlds"]
    for which in (UPPER, LOWER):
        assert worlds["00"][which]["pattern"] == worlds["11"][which]["pattern"]
        assert worlds["01"][which]["pattern"] == worlds["10"][which]["pattern"]


def test_sign_pattern_survives_grid_refinement():
    params = _no_jump_params(L=0.3)
    coarse = envelope_pide_sign_check(params, grid_n=8, worlds=["00", "01"])
    fine = envelope_pide_sign_check(params, grid_n=16, worlds=["00", "01"])
    for w in ("00", "01"):
        for which in (UPPER, LOWER):
            assert coarse["worlds"][w][which]["pattern"] == fine["worlds"][w][which]["pattern"]
            assert fine["worlds"][w][which]["uniform"]
    assert sum(fine["worlds"]["00"][UPPER][k] for k in ("positive", "negative", "zero")) == 256


def test_sign_check_needs_fine_grid():
    with pytest.raises(ParameterError):
        envelope_pide_sign_check(_no_jump_params(), grid_n=4)


def test_trig_branch_is_flagged():
    params = _no_jump_params(L=50.0)
    assert eval_envelopes(params, 0.0, 0.0).complex_branch
    assert not eval_envelopes(_no_jump_params(L=1e-3), 0.0, 0.0).complex_branch


def test_test_function_partials_match_values():
    xi = envelope_test_function(_no_jump_params("10"), UPPER)
    errors = check_partials(xi, (0.1, 0.4))
    assert max(errors.values()) < 1e-5


def test_compensator_constants_against_dblquad(unit_exp):
    K1 = unit_exp.llr_measure(1.0)
    K2 = JumpMeasureSpec.exponential(0.5).llr_measure(2.0)
    dens1 = lambda y: float(K1.density(y))
    dens2 = lambda y: float(K2.density(y))
    for k in (0, 1):
        ref, _ = integrate.dblquad(
            lambda y2, y1: (y1, y2)[k] / (1.0 + math.hypot(y1, y2)) * dens1(y1) * dens2(y2),
            0.0, 60.0, 0.0, 60.0, epsabs=1e-10, epsrel=1e-10)
        assert compensator_constant(K1, K2, k) == pytest.approx(ref, rel=1e-6)
    ref1, _ = integrate.quad(lambda y: y / (1.0 + y) * dens1(y), 0.0, np.inf)
    assert compensator_constant_1d(K1) == pytest.approx(ref1, rel=1e-8)
    with pytest.raises(ParameterError):
        compensator_constant(K1, K2, 2)


def test_envelope_params_validation():
    with pytest.raises(ParameterError):
        EnvelopeParams(beta=(0.0, 1.0), gamma=(0.0, 0.0), C=(0.0, 0.0), M=0.0, K_bound=0.0,
                       L_const=0.1, bounds=((-1.0, 1.0), (-1.0, 1.0)), world="00")
    with pytest.raises(ParameterError):
        _no_jump_params(world="0")
    with pytest.raises(ParameterError):
        _no_jump_params().with_bounds([(0.5, 1.0), (-1.0, 1.0)])


def test_cross_sections(default_params):
    frame = envelope_cross_sections(default_params["01"], n=16)
    assert set(frame["section"]) == {"y=l2", "y=0"}
    assert len(frame) == 32


def _one_dim(L=0.01):
    return EnvelopeParams(beta=(1.0,), gamma=(0.0,), C=(0.0,), M=0.0, K_bound=0.0, L_const=L,
                          bounds=((-0.5, 1.0),), world="0")


def test_one_dimensional_rectangle_hits_target():
    params = _one_dim()
    cand = rectangle_from_envelopes(0.9, params, l1=-0.5)
    assert len(cand.audit) == 2
    assert cand.r[0] == max(cand.upper[0], cand.lower[0])
    for which, r in ((UPPER, cand.upper[0]), (LOWER, cand.lower[0])):
        value = envelope_parts(params.with_bounds([(-0.5, r)]), which, 0.0)[0]
        assert float(value) == pytest.approx(0.1, abs=1e-9)
    assert cand.rectangle() == (-0.5, cand.r[0])


def test_two_dimensional_rectangle_candidates():
    params = _no_jump_params()
    cand = rectangle_from_envelopes(ErrorSpec.symmetric(0.95), params, l1=-1.0, l2=-1.5)
    assert len(cand.r) == 2
    assert all(r > 0 for r in cand.r)
    # two worlds per coordinate and two envelopes each
    assert len(cand.audit) == 8
    for row in cand.audit:
        assert row["target"] == pytest.approx(math.sqrt(0.05))
    rect = cand.rectangle()
    assert rect.l1 == -1.0 and rect.r2 == cand.r[1]


def test_unreachable_lower_target_is_infeasible():
    # the lower factor at 0 stays below exp((l/|beta|)(s - B)) < sqrt(0.5) for every r
    with pytest.raises(InfeasibleError):
        rectangle_from_envelopes(ErrorSpec.symmetric(0.5), _no_jump_params(), l1=-1.0, l2=-1.5)


def test_right_threshold_grows_as_alpha_shrinks():
    params = _one_dim()
    cands = [rectangle_from_envelopes(alpha, params, l1=-0.5) for alpha in (0.9, 0.5, 0.2)]
    for which in ("upper", "lower", "r"):
        rs = [getattr(c, which)[0] for c in cands]
        assert rs[0] < rs[1] < rs[2], (which, rs)


def test_symmetric_parameters_give_equal_right_thresholds():
    params = EnvelopeParams(beta=(1.0, 1.0), gamma=(0.2, 0.2), C=(0.0, 0.0), M=0.0, K_bound=0.0,
                            L_const=0.1, bounds=((-1.0, 1.0), (-1.0, 1.0)), world="00")
    cand = rectangle_from_envelopes(ErrorSpec.symmetric(0.5), params, l1=-1.0, l2=-1.0)
    assert cand.r[0] == pytest.approx(cand.r[1], rel=1e-10)
    assert cand.upper[0] == pytest.approx(cand.upper[1], rel=1e-10)
    assert cand.lower[0] == pytest.approx(cand.lower[1], rel=1e-10)


def test_upper_solve_stays_before_the_sin_pole():
    params = EnvelopeParams(beta=(1.0, 1.0), gamma=(0.2, 0.2), C=(0.0, 0.0), M=0.0, K_bound=0.0,
                            L_const=0.1, bounds=((-1.0, 1.0), (-1.0, 1.0)), world="00")
    cand = rectangle_from_envelopes(ErrorSpec.symmetric(0.5), params, l1=-1.0, l2=-1.0)
    pole = -1.0 + math.pi / math.sqrt(0.1 - 0.04)
    assert 0 < cand.upper[0] < pole
    value = envelope_parts(params.with_bounds([(-1.0, cand.upper[0]), (-1.0, cand.upper[1])]), UPPER, 0.0, 0.0)[0]
    assert float(value) == pytest.approx(0.5, abs=1e-8)


def test_rectangle_inputs_are_checked():
    with pytest.raises(ParameterError):
        rectangle_from_envelopes(0.9, _one_dim(), l1=0.5)
    with pytest.raises(ParameterError):
        rectangle_from_envelopes(0.9, _no_jump_params(), l1=-1.0, l2=-1.0)
    with pytest.raises(ParameterError):
        rectangle_from_envelopes(0.9, _one_dim(), l1=-0.5, wiring="other")


def test_one_dimensional_params_from_coefficients():
    coeffs = jump_llr_coefficients(JumpTestParams.single(a=1.0, sigma=1.0), 0, 0)
    params = envelope_params_1d(coeffs, (-0.5, 1.0))
    assert params.dim == 1
    assert params.L_const == pytest.approx(max(params.K_bound, 1.0) * params.M)
    grid = envelope_grid(params, 32)
    assert (grid["lower"] <= grid["upper"] + 1e-12).all()
