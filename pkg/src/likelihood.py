"""
likelihood.py
Log-likelihood-ratio (LLR) characteristics for the two hypothesis tests:

  drift test   z = sigma W + m t under H1 against z = sigma W under H0
  jump test    jump measure (1 + a x) nu(dx) under H1 against nu(dx) under H0

Coordinates are indexed k = 0, 1 and hypothesis indices i = 0, 1.

Usage:
  from likelihood import JumpTestParams, jump_llr_coefficients, jump_llr_characteristics
  coeffs = jump_llr_coefficients(JumpTestParams.single(a=1.0, sigma=1.0), k=0, i=1)
  chars = jump_llr_characteristics(coeffs, i=1)
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from errors import ParameterError
from levy_sim import (DEFAULT_SEED, LLR_DENSITY, LLR_PUSHFORWARD, JumpMeasureSpec,
                      LevyCharacteristics, SamplePath, simulate_bm_drift)
from quadrature import QuadratureSpec, integrate_measure

log = logging.getLogger(__name__)

# -----------------------
# CONFIG
# -----------------------
PROOF = "proof"          # drift (-1)^i m^2 / 2 sigma^2
STATEMENT = "statement"  # drift (-1)^(i+1) m^2 / 2 sigma^2: the law of log dP1/dP0 under P_i
DEFAULT_BASE_MEASURE = JumpMeasureSpec.exponential(intensity=1.0, scale=1.0)
# -----------------------


def llr_sign(i: int, convention: str) -> int:
    if i not in (0, 1):
        raise ParameterError(f"hypothesis index must be 0 or 1, got {i}")
    if convention == PROOF:
        return -1 if i == 1 else 1
    if convention == STATEMENT:
        return 1 if i == 1 else -1
    raise ParameterError(f"unknown sign convention {convention!r}")


WORLDS = ("00", "01", "10", "11")


def parse_world(world: str) -> Tuple[int, int]:
    """"ij" -> (i, j); coordinate 0 carries i, coordinate 1 carries j."""
    if world not in WORLDS:
        raise ParameterError(f"world must be one of {WORLDS}, got {world!r}")
    return int(world[0]), int(world[1])


def _pick(values: Sequence, k: int, what: str):
    if not 0 <= k < len(values):
        raise ParameterError(f"coordinate {k} out of range for {what} of length {len(values)}")
    return values[k]


@dataclass(frozen=True)
class DriftTestParams:
    m: Tuple[float, ...]
    sigma: Tuple[float, ...]
    index: Tuple[int, ...] = (0, 0)

    def __post_init__(self):
        if len(self.m) != len(self.sigma):
            raise ParameterError("m and sigma must have one entry per coordinate")
        for k, (m, s) in enumerate(zip(self.m, self.sigma)):
            if not s > 0:
                raise ParameterError(f"sigma[{k}] must be > 0, got {s}")
            if m == 0 or not math.isfinite(m):
                raise ParameterError(f"m[{k}] must be finite and nonzero, got {m}")

    @classmethod
    def symmetric(cls, m: float = 1.0, sigma: float = 1.0) -> "DriftTestParams":
        return cls(m=(m, m), sigma=(sigma, sigma))


@dataclass(frozen=True)
class JumpTestParams:
    a: Tuple[float, ...]
    sigma: Tuple[float, ...]
    measures: Tuple[JumpMeasureSpec, ...] = field(default=())
    index: Tuple[int, ...] = (0, 0)
    k_mode: str = LLR_DENSITY

    def __post_init__(self):
        if len(self.a) != len(self.sigma):
            raise ParameterError("a and sigma must have one entry per coordinate")
        if not self.measures:
            object.__setattr__(self, "measures", tuple(DEFAULT_BASE_MEASURE for _ in self.a))
        if len(self.measures) != len(self.a):
            raise ParameterError("one base jump measure per coordinate is required")
        for k, (a, s) in enumerate(zip(self.a, self.sigma)):
            if a < 0 or not math.isfinite(a):
                raise ParameterError(f"a[{k}] must be finite and >= 0, got {a}")
            if not s > 0:
                raise ParameterError(f"sigma[{k}] must be > 0, got {s}")
        if self.k_mode not in (LLR_DENSITY, LLR_PUSHFORWARD):
            raise ParameterError(f"unknown K mode {self.k_mode!r}")

    @classmethod
    def single(cls, a: float, sigma: float, measure: JumpMeasureSpec = None,
               k_mode: str = LLR_DENSITY) -> "JumpTestParams":
        return cls(a=(a,), sigma=(sigma,), measures=(measure or DEFAULT_BASE_MEASURE,),
                   index=(0,), k_mode=k_mode)


@dataclass(frozen=True)
class LlrCoefficients:
    beta: float
    m: float
    gamma: float
    K: JumpMeasureSpec
    sign: int
    a: float = 0.0
    sigma: float = 1.0

    @property
    def K_mass(self) -> float:
        return self.K.total_mass()


# -----------------------
# drift test
# -----------------------
def drift_llr_characteristics(params: DriftTestParams, k: int, i: int,
                              convention: str = PROOF) -> LevyCharacteristics:
    m = _pick(params.m, k, "m")
    s = _pick(params.sigma, k, "sigma")
    half = m * m / (2.0 * s * s)
    return LevyCharacteristics(drift=llr_sign(i, convention) * half, diffusion_var=2.0 * half)


def drift_llr_from_observation(obs: SamplePath, m: float, sigma: float) -> SamplePath:
    """u_t = (m / sigma^2) z_t - (m^2 / 2 sigma^2) t, pathwise."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    s2 = sigma * sigma
    values = (m / s2) * (obs.values - obs.start) - (m * m / (2.0 * s2)) * obs.times
    return SamplePath(times=obs.times, values=values, dt=obs.dt, jump_indices=obs.jump_indices)


def simulate_drift_observation(params: DriftTestParams, k: int, i: int, horizon: float, dt: float,
                               seed: int = DEFAULT_SEED, path_index: int = 0) -> SamplePath:
    """Observation z for coordinate k: drift m under H1, none under H0."""
    m = _pick(params.m, k, "m")
    s = _pick(params.sigma, k, "sigma")
    llr_sign(i, PROOF)
    return simulate_bm_drift(m if i == 1 else 0.0, s, horizon, dt, seed=seed, path_index=path_index)


# -----------------------
# jump test
# -----------------------
def jump_llr_coefficients(params: JumpTestParams, k: int, i: int,
                          quad: QuadratureSpec = None) -> LlrCoefficients:
    """
    beta  = -a int (1 ^ x) x nu(dx) / sigma
    m     =  a int_{x>1} x nu(dx)
    gamma =  m - beta^2/2 + a int_0^1 ((log(1+x))^2 - x) nu(dx)
    K     =  a log(1+x) (1+a x) nu(dx)    (or its pushforward variant)
    """
    quad = quad or QuadratureSpec()
    a = _pick(params.a, k, "a")
    sigma = _pick(params.sigma, k, "sigma")
    nu = _pick(params.measures, k, "measures").with_tilt(0.0)
    sign = llr_sign(i, STATEMENT)
    K = nu.llr_measure(a, params.k_mode)
    if a == 0.0 or nu.is_zero:
        return LlrCoefficients(beta=0.0, m=0.0, gamma=0.0, K=K, sign=sign, a=a, sigma=sigma)

    beta = -a * integrate_measure(lambda x: min(1.0, x) * x, nu, quad) / sigma
    m = a * integrate_measure(lambda x: x if x > 1.0 else 0.0, nu, quad)
    small = integrate_measure(lambda x: (math.log1p(x) ** 2 - x) if x < 1.0 else 0.0, nu, quad)
    gamma = m - 0.5 * beta * beta + a * small
    log.debug("jump LLR coefficients k=%d a=%g: beta=%.6g m=%.6g gamma=%.6g", k, a, beta, m, gamma)
    return LlrCoefficients(beta=beta, m=m, gamma=gamma, K=K, sign=sign, a=a, sigma=sigma)


def jump_llr_characteristics(coeffs: LlrCoefficients, i: int) -> LevyCharacteristics:
    """((-1)^i gamma, beta^2, (-1)^(i+1) K)."""
    sign = llr_sign(i, PROOF)
    jumps: Optional[JumpMeasureSpec] = None if coeffs.K.is_zero else coeffs.K
    return LevyCharacteristics(drift=sign * coeffs.gamma, diffusion_var=coeffs.beta ** 2,
                               jumps=jumps, jump_sign=-sign)


def coefficients_record(coeffs: LlrCoefficients) -> Dict[str, float]:
    return {
        "beta": float(coeffs.beta),
        "m": float(coeffs.m),
        "gamma": float(coeffs.gamma),
        "K_mass": float(coeffs.K_mass),
        "sign": int(coeffs.sign),
    }


def coefficient_table(params: JumpTestParams, k: int, a_grid: Sequence[float],
                      quad: QuadratureSpec = None) -> "np.ndarray":
    """Rows (a, beta, m, gamma, K_mass) over a grid of tilts for coordinate k."""
    rows = []
    for a in a_grid:
        a_vec = list(params.a)
        a_vec[k] = float(a)
        p = JumpTestParams(a=tuple(a_vec), sigma=params.sigma, measures=params.measures,
                           index=params.index, k_mode=params.k_mode)
        c = jump_llr_coefficients(p, k, 1, quad)
        rows.append((a, c.beta, c.m, c.gamma, c.K_mass))
    return np.array(rows, dtype=float)
