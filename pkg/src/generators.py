"""
generators.py
Infinitesimal generators of the LLR processes, evaluated on test functions,
and a Monte Carlo Dynkin check (E xi(u_t) - xi(x)) / t -> L xi(x).

  apply_drift_generator            sum_k m_k^2/2sigma_k^2 (d_kk + s_k d_k)
  apply_jump_generator             local part + (-1)^(i+j) double integral over K1 x K2,
                                   or one compensated integral per coordinate
  apply_characteristics_generator  generator of two independent 1-D Levy coordinates,
                                   the process levy_sim actually simulates
  drift_theorem_report             the drift and jump generators against simulated LLR
  jump_theorem_report              increments, one row per sign convention and kernel wiring

Test functions take (x1, x2) and broadcast over numpy arrays.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import MeasureIntegrabilityError, ParameterError
from levy_sim import DEFAULT_SEED, JumpMeasureSpec, LevyCharacteristics, make_rng, sample_increments
from likelihood import (PROOF, STATEMENT, DriftTestParams, LlrCoefficients, jump_llr_characteristics, llr_sign,
                        parse_world)
from quadrature import QuadratureSpec, integrate_measure, tensor_integrate

log = logging.getLogger(__name__)

# -----------------------
# CONFIG
# -----------------------
FD_STEP = 1e-4
FD_RTOL = 1e-6
DYNKIN_T = 1e-3
DYNKIN_N = 200_000
DYNKIN_SE = 3.0         # residual band: DYNKIN_SE * standard error + DYNKIN_BIAS * t
DYNKIN_BIAS = 10.0
PRODUCT = "product"        # joint K1 x K2 integral, as the theorem prints it
COORDINATE = "coordinate"  # one compensated integral per coordinate
WIRINGS = (PRODUCT, COORDINATE)
# -----------------------

Box = Tuple[Tuple[float, float], Tuple[float, float]]


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    name: str
    value: Callable
    grad: Callable       # (x1, x2) -> (d1, d2)
    hess: Callable       # (x1, x2) -> (d11, d12, d22)
    domain: Optional[Box] = None

    def __call__(self, x1, x2):
        return self.value(x1, x2)

    def check_domain(self, x: Sequence[float]) -> None:
        if self.domain is None:
            return
        for k, (lo, hi) in enumerate(self.domain):
            if not lo <= x[k] <= hi:
                raise ParameterError(f"{self.name}: x[{k}]={x[k]} outside domain [{lo}, {hi}]")

    def scaled(self, c: float) -> "TestFunction":
        return linear_combination(c, self, 0.0, self)


def linear_combination(a: float, f: TestFunction, b: float, g: TestFunction) -> TestFunction:
    return TestFunction(
        name=f"{a}*{f.name}+{b}*{g.name}",
        value=lambda x1, x2: a * f.value(x1, x2) + b * g.value(x1, x2),
        grad=lambda x1, x2: tuple(a * u + b * v for u, v in zip(f.grad(x1, x2), g.grad(x1, x2))),
        hess=lambda x1, x2: tuple(a * u + b * v for u, v in zip(f.hess(x1, x2), g.hess(x1, x2))),
    )


def _zero(x1, x2):
    return 0.0 * np.asarray(x1) * np.asarray(x2)


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction("const", lambda x1, x2: c + _zero(x1, x2),
                        lambda x1, x2: (0.0, 0.0), lambda x1, x2: (0.0, 0.0, 0.0))


def standard_test_functions() -> Dict[str, TestFunction]:
    """x1, x2, x1^2, x1*x2, exp(-x1)."""
    return {
        "x1": TestFunction("x1", lambda x1, x2: x1 + _zero(x1, x2),
                           lambda x1, x2: (1.0, 0.0), lambda x1, x2: (0.0, 0.0, 0.0)),
        "x2": TestFunction("x2", lambda x1, x2: x2 + _zero(x1, x2),
                           lambda x1, x2: (0.0, 1.0), lambda x1, x2: (0.0, 0.0, 0.0)),
        "x1^2": TestFunction("x1^2", lambda x1, x2: x1 * x1 + _zero(x1, x2),
                             lambda x1, x2: (2.0 * x1, 0.0), lambda x1, x2: (2.0, 0.0, 0.0)),
        "x1*x2": TestFunction("x1*x2", lambda x1, x2: x1 * x2,
                              lambda x1, x2: (x2, x1), lambda x1, x2: (0.0, 1.0, 0.0)),
        "exp(-x1)": TestFunction("exp(-x1)", lambda x1, x2: np.exp(-x1) + _zero(x1, x2),
                                 lambda x1, x2: (-np.exp(-x1), 0.0),
                                 lambda x1, x2: (np.exp(-x1), 0.0, 0.0)),
    }


def check_partials(xi: TestFunction, x: Sequence[float], h: float = FD_STEP) -> Dict[str, float]:
    """Scaled gap between analytic partials and central differences at x."""
    x1, x2 = float(x[0]), float(x[1])
    f = lambda a, b: float(xi.value(a, b))
    fd = {
        "d1": (f(x1 + h, x2) - f(x1 - h, x2)) / (2 * h),
        "d2": (f(x1, x2 + h) - f(x1, x2 - h)) / (2 * h),
        "d11": (f(x1 + h, x2) - 2 * f(x1, x2) + f(x1 - h, x2)) / (h * h),
        "d22": (f(x1, x2 + h) - 2 * f(x1, x2) + f(x1, x2 - h)) / (h * h),
        "d12": (f(x1 + h, x2 + h) - f(x1 + h, x2 - h) - f(x1 - h, x2 + h) + f(x1 - h, x2 - h)) / (4 * h * h),
    }
    g1, g2 = xi.grad(x1, x2)
    h11, h12, h22 = xi.hess(x1, x2)
    exact = {"d1": g1, "d2": g2, "d11": h11, "d22": h22, "d12": h12}
    return {k: abs(fd[k] - float(exact[k])) / max(1.0, abs(float(exact[k]))) for k in fd}


# -----------------------
# generators
# -----------------------
def apply_drift_generator(world: str, params: DriftTestParams, xi: TestFunction,
                          x: Sequence[float], convention: str = STATEMENT) -> float:
    xi.check_domain(x)
    idx = parse_world(world)
    g = xi.grad(x[0], x[1])
    h = xi.hess(x[0], x[1])
    second = (h[0], h[2])
    out = 0.0
    for k in (0, 1):
        c = params.m[k] ** 2 / (2.0 * params.sigma[k] ** 2)
        out += c * (float(second[k]) + llr_sign(idx[k], convention) * float(g[k]))
    return out


def _local_part(world: str, rho: float, coeffs: Tuple[LlrCoefficients, LlrCoefficients],
                xi: TestFunction, x: Tuple[float, float], convention: str) -> float:
    idx = parse_world(world)
    c1, c2 = coeffs
    g1, g2 = (float(v) for v in xi.grad(*x))
    h11, h12, h22 = (float(v) for v in xi.hess(*x))
    return (llr_sign(idx[0], convention) * c1.gamma * g1 + llr_sign(idx[1], convention) * c2.gamma * g2
            + 0.5 * c1.beta ** 2 * h11 + 0.5 * c2.beta ** 2 * h22
            + rho * c1.beta * c2.beta * h12)


def apply_jump_generator(world: str, rho: float, coeffs: Tuple[LlrCoefficients, LlrCoefficients],
                         xi: TestFunction, x: Sequence[float], quad: QuadratureSpec = None,
                         convention: str = STATEMENT, wiring: str = PRODUCT) -> float:
    """
    Local part with first-order sign llr_sign(i, convention) plus the nonlocal term.
    PRODUCT    (-1)^(i+j) * int [xi(x+y) - xi(x) - y.grad/(1+|y|)] K1(dy1) K2(dy2)
    COORDINATE sum_k int [xi(x + s_k y e_k) - xi(x) - s_k y/(1+y) d_k xi] K_k(dy),
               s_k = (-1)^(idx_k + 1), the generator of independent coordinate jumps
    """
    if wiring not in WIRINGS:
        raise ParameterError(f"unknown kernel wiring {wiring!r}")
    xi.check_domain(x)
    i, j = parse_world(world)
    pt = (float(x[0]), float(x[1]))
    local = _local_part(world, rho, coeffs, xi, pt, convention)
    c1, c2 = coeffs
    if wiring == COORDINATE:
        return local + sum(_jump_term(jump_llr_characteristics(c, idx), xi, pt, k, True, quad)
                           for k, (c, idx) in enumerate(zip(coeffs, (i, j))))
    if c1.K.is_zero or c2.K.is_zero:
        return local
    x1, x2 = pt
    base = float(xi.value(x1, x2))
    g1, g2 = (float(v) for v in xi.grad(x1, x2))

    def integrand(y1, y2):
        norm = np.sqrt(y1 * y1 + y2 * y2)
        return xi.value(x1 + y1, x2 + y2) - base - (y1 * g1 + y2 * g2) / (1.0 + norm)

    return local + (-1) ** (i + j) * tensor_integrate(integrand, c1.K, c2.K, quad)


def _jump_term(chars: LevyCharacteristics, xi: TestFunction, x: Tuple[float, float], k: int,
               compensate: bool, quad: QuadratureSpec) -> float:
    if not chars.has_jumps:
        return 0.0
    s = chars.jump_sign
    base = float(xi.value(*x))
    grad_k = float(xi.grad(*x)[k])

    def f(y):
        moved = (x[0] + s * y, x[1]) if k == 0 else (x[0], x[1] + s * y)
        out = float(xi.value(*moved)) - base
        if compensate:
            out -= s * y / (1.0 + y) * grad_k
        return out

    return integrate_measure(f, chars.jumps, quad)


def apply_characteristics_generator(chars: Tuple[LevyCharacteristics, LevyCharacteristics],
                                    xi: TestFunction, x: Sequence[float], rho: float = 0.0,
                                    compensate: bool = False, quad: QuadratureSpec = None) -> float:
    """
    Generator of (u1, u2) with independent jump parts and Brownian correlation rho.
    The drift enters as given. compensate=True adds -s y/(1+y) d_k xi to the jump
    integrand, which is the generator of sample_increments(..., compensate=True).
    """
    xi.check_domain(x)
    pt = (float(x[0]), float(x[1]))
    g = [float(v) for v in xi.grad(*pt)]
    h11, h12, h22 = (float(v) for v in xi.hess(*pt))
    out = 0.5 * chars[0].diffusion_var * h11 + 0.5 * chars[1].diffusion_var * h22
    out += rho * math.sqrt(chars[0].diffusion_var * chars[1].diffusion_var) * h12
    for k in (0, 1):
        out += chars[k].drift * g[k] + _jump_term(chars[k], xi, pt, k, compensate, quad)
    return out


@dataclass(frozen=True)
class DynkinResult:
    estimate: float
    standard_error: float
    generator_value: float
    mc_value: float


def _correlated_normals(rng: np.random.Generator, n: int, rho: float) -> Tuple[np.ndarray, np.ndarray]:
    z1 = rng.standard_normal(n)
    return z1, rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)


def _mc_generator(xi: TestFunction, x: Sequence[float], d1: np.ndarray, d2: np.ndarray,
                  t_small: float) -> Tuple[float, float]:
    x1, x2 = float(x[0]), float(x[1])
    diffs = (np.asarray(xi.value(x1 + d1, x2 + d2), dtype=float) - float(xi.value(x1, x2))) / t_small
    return float(diffs.mean()), float(diffs.std(ddof=1) / math.sqrt(len(diffs)))


def _check_dynkin_inputs(t_small: float, rho: float) -> None:
    if not t_small > 0:
        raise ParameterError(f"t_small must be > 0, got {t_small}")
    if not -1.0 <= rho <= 1.0:
        raise ParameterError(f"rho must lie in [-1, 1], got {rho}")


def dynkin_residual(chars: Tuple[LevyCharacteristics, LevyCharacteristics], xi: TestFunction,
                    x: Sequence[float], t_small: float = DYNKIN_T, n_mc: int = DYNKIN_N,
                    seed: int = DEFAULT_SEED, rho: float = 0.0, compensate: bool = False,
                    quad: QuadratureSpec = None) -> DynkinResult:
    """(E xi(u_t) - xi(x)) / t from n_mc increments, minus the closed-form generator value."""
    _check_dynkin_inputs(t_small, rho)
    rng = make_rng(seed, 0)
    z1, z2 = _correlated_normals(rng, n_mc, rho)
    d1 = sample_increments(chars[0], t_small, n_mc, rng, z=z1, compensate=compensate, quad=quad)
    d2 = sample_increments(chars[1], t_small, n_mc, rng, z=z2, compensate=compensate, quad=quad)
    mc, se = _mc_generator(xi, x, d1, d2, t_small)
    gen = apply_characteristics_generator(chars, xi, x, rho=rho, compensate=compensate, quad=quad)
    return DynkinResult(estimate=mc - gen, standard_error=se, generator_value=gen, mc_value=mc)


def _report_row(function: str, convention: str, wiring: str, gen: float, mc: float, se: float,
                 t_small: float) -> Dict[str, object]:
    residual = mc - gen
    return {"function": function, "convention": convention, "wiring": wiring, "generator": gen,
            "mc": mc, "se": se, "residual": residual,
            "passes": bool(abs(residual) <= DYNKIN_SE * se + DYNKIN_BIAS * t_small)}


def drift_theorem_report(params: DriftTestParams, world: str, x: Sequence[float],
                         functions: Dict[str, TestFunction] = None, t_small: float = DYNKIN_T,
                         n_mc: int = DYNKIN_N, seed: int = DEFAULT_SEED) -> pd.DataFrame:
    """
    apply_drift_generator under both sign conventions against the observed LLR
    u = (m/sigma^2) z - (m^2/2 sigma^2) t, with z = mu_i t + sigma W and mu_1 = m, mu_0 = 0.
    One row per (function, convention).
    """
    _check_dynkin_inputs(t_small, 0.0)
    functions = functions or standard_test_functions()
    idx = parse_world(world)
    rng = make_rng(seed, 1)
    steps = []
    for k in (0, 1):
        m, s = params.m[k], params.sigma[k]
        z = (m if idx[k] == 1 else 0.0) * t_small + s * math.sqrt(t_small) * rng.standard_normal(n_mc)
        steps.append((m / (s * s)) * z - (m * m / (2.0 * s * s)) * t_small)
    rows = []
    for name, xi in functions.items():
        mc, se = _mc_generator(xi, x, steps[0], steps[1], t_small)
        for convention in (STATEMENT, PROOF):
            gen = apply_drift_generator(world, params, xi, x, convention=convention)
            rows.append(_report_row(name, convention, "local", gen, mc, se, t_small))
    table = pd.DataFrame(rows)
    log.info("drift generator check world %s: %d/%d rows inside the band",
             world, int(table["passes"].sum()), len(table))
    return table


def jump_theorem_report(coeffs: Tuple[LlrCoefficients, LlrCoefficients], world: str, x: Sequence[float],
                        rho: float = 0.0, functions: Dict[str, TestFunction] = None,
                        t_small: float = DYNKIN_T, n_mc: int = DYNKIN_N, seed: int = DEFAULT_SEED,
                        quad: QuadratureSpec = None) -> pd.DataFrame:
    """
    apply_jump_generator under every (convention, wiring) against increments of the
    triplet ((-1)^i gamma, beta^2, (-1)^(i+1) K) per coordinate, jumps compensated
    by y/(1+y). One row per (function, convention, wiring).
    """
    _check_dynkin_inputs(t_small, rho)
    functions = functions or standard_test_functions()
    idx = parse_world(world)
    rng = make_rng(seed, 2)
    z = _correlated_normals(rng, n_mc, rho)
    steps = [sample_increments(jump_llr_characteristics(coeffs[k], idx[k]), t_small, n_mc, rng,
                               z=z[k], compensate=True, quad=quad) for k in (0, 1)]
    rows = []
    for name, xi in functions.items():
        mc, se = _mc_generator(xi, x, steps[0], steps[1], t_small)
        for convention in (STATEMENT, PROOF):
            for wiring in WIRINGS:
                gen = apply_jump_generator(world, rho, coeffs, xi, x, quad=quad,
                                           convention=convention, wiring=wiring)
                rows.append(_report_row(name, convention, wiring, gen, mc, se, t_small))
    table = pd.DataFrame(rows)
    log.info("jump generator check world %s: %d/%d rows inside the band",
             world, int(table["passes"].sum()), len(table))
    return table


def jump_mass_M(K1: JumpMeasureSpec, K2: JumpMeasureSpec, quad: QuadratureSpec = None) -> float:
    """M = int K1(dy1) K2(dy2) = M1 * M2."""
    m1, m2 = K1.total_mass(quad), K2.total_mass(quad)
    if not (math.isfinite(m1) and math.isfinite(m2)):
        raise MeasureIntegrabilityError(f"jump masses must be finite, got {m1} and {m2}")
    return m1 * m2
