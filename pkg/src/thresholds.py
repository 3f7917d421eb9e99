"""
thresholds.py
Rectangle thresholds (l1, r1) x (l2, r2) from target Type I errors alpha_ij.

Three of the four alphas are free; the fourth follows from
  (1 - a00)(1 - a11) = (1 - a01)(1 - a10).
Given l1, the rectangle is solved in order r1 (closed form), r2 (bisection on
the coupled r1/r2 relation) and l2 (closed form).

The coupled relation is printed with the denominator
  (1 - a01) + (1 - a00 e^r2)                       -> variant "printed"
and reads naturally as
  (1 - a00) e^r2 + (1 - a01)                       -> variant "alternate".
Both are available; "printed" is the default.

Usage:
  from thresholds import ErrorSpec, solve_rectangle
  rect = solve_rectangle(ErrorSpec.from_three(0.05, 0.05, 0.10), l1=-2.5)
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, Optional, Tuple

import pandas as pd
from scipy import optimize

from errors import (InfeasibleThresholdError, IntervalUndefinedError, NoSolutionError,
                    ParameterError)

log = logging.getLogger(__name__)

# -----------------------
# CONFIG
# -----------------------
PRINTED = "printed"
ALTERNATE = "alternate"
VARIANTS = (PRINTED, ALTERNATE)
BISECT_XTOL = 1e-12
BRACKET_LO = 1e-8
BRACKET_HI = 50.0
BRACKET_MAX = 700.0      # e^r2 must stay representable
CONSTRAINT_TOL = 1e-12
# -----------------------


def _check_prob(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ParameterError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True)
class ErrorSpec:
    alpha_00: float
    alpha_01: float
    alpha_10: float
    alpha_11: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            _check_prob(name, value)
        gap = (1 - self.alpha_00) * (1 - self.alpha_11) - (1 - self.alpha_01) * (1 - self.alpha_10)
        if abs(gap) > CONSTRAINT_TOL:
            raise ParameterError(
                f"alphas violate (1-a00)(1-a11) = (1-a01)(1-a10) by {gap:.3e}")

    @classmethod
    def from_three(cls, a00: float, a01: float, a10: float) -> "ErrorSpec":
        return cls(a00, a01, a10, induce_fourth_alpha(a00, a01, a10))

    @classmethod
    def symmetric(cls, alpha: float) -> "ErrorSpec":
        return cls(alpha, alpha, alpha, alpha)

    def world(self, ij: str) -> float:
        return getattr(self, f"alpha_{ij}")

    def to_dict(self) -> Dict[str, float]:
        return {k.replace("alpha_", ""): v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class Rectangle:
    l1: float
    r1: float
    l2: float
    r2: float

    def __post_init__(self):
        for k, (l, r) in enumerate(((self.l1, self.r1), (self.l2, self.r2)), start=1):
            if not (l < 0.0 < r):
                raise ParameterError(f"rectangle needs l{k} < 0 < r{k}, got l{k}={l} r{k}={r}")

    def bounds(self, k: int) -> Tuple[float, float]:
        """(l, r) for coordinate k in {0, 1}."""
        return ((self.l1, self.r1), (self.l2, self.r2))[k]

    def contains(self, x: float, y: float) -> bool:
        return self.l1 <= x <= self.r1 and self.l2 <= y <= self.r2

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def induce_fourth_alpha(a00: float, a01: float, a10: float) -> float:
    for name, value in (("a00", a00), ("a01", a01), ("a10", a10)):
        _check_prob(name, value)
    ratio = (1 - a01) * (1 - a10) / (1 - a00)
    a11 = 1.0 - ratio
    if not 0.0 < a11 < 1.0:
        raise InfeasibleThresholdError(
            f"(1-a01)(1-a10)/(1-a00) = {ratio:.6g} puts a11 = {a11:.6g} outside (0, 1)")
    return a11


def l1_feasible_interval(a00: float, a10: float) -> Tuple[float, float]:
    _check_prob("a00", a00)
    _check_prob("a10", a10)
    if a10 <= a00:
        raise IntervalUndefinedError(
            f"l1 interval needs a10 > a00, got a10={a10} a00={a00}")
    return math.log((a10 - a00) / (1 - a00)), math.log(a10 / (1 - a00))


def _l1_bounds(a00: float, a10: float) -> Tuple[float, float]:
    # a10 == a00 keeps the upper bound; the lower one runs off to -inf
    if a10 == a00:
        return -math.inf, math.log(a10 / (1 - a00))
    return l1_feasible_interval(a00, a10)


def default_l1(a00: float, a10: float) -> float:
    """Midpoint of the feasible interval, or upper - ln 2 when a10 == a00."""
    lo, hi = _l1_bounds(a00, a10)
    if math.isinf(lo):
        return hi - math.log(2.0)
    return 0.5 * (lo + hi)


def _r1(errors: ErrorSpec, l1: float) -> float:
    c1 = (1 - errors.alpha_10) / (1 - errors.alpha_00)
    arg = 1.0 - (1.0 - math.exp(l1)) / c1
    if not 0.0 < arg < 1.0:
        raise InfeasibleThresholdError(f"r1 logarithm argument {arg:.6g} outside (0, 1) at l1={l1}")
    return -math.log(arg)


def coupled_residual(errors: ErrorSpec, r1: float, variant: str = PRINTED) -> Callable[[float], float]:
    """h(r2) = e^r2 / den(e^r2) - 1 - C1 e^-r1, rewritten to avoid overflow in e^r2."""
    a00, a01 = errors.alpha_00, errors.alpha_01
    c1 = (1 - errors.alpha_10) / (1 - a00)
    k = 1.0 + c1 * math.exp(-r1)
    if variant == PRINTED:
        def h(r2):
            den = (2.0 - a01) * math.exp(-r2) - a00
            return (1.0 / den if den > 0 else math.inf) - k
    elif variant == ALTERNATE:
        def h(r2):
            return 1.0 / ((1.0 - a00) + (1.0 - a01) * math.exp(-r2)) - k
    else:
        raise ParameterError(f"unknown threshold variant {variant!r}")
    return h


def _solve_r2(errors: ErrorSpec, r1: float, variant: str) -> float:
    h = coupled_residual(errors, r1, variant)
    lo, hi = BRACKET_LO, BRACKET_HI
    if variant == PRINTED:
        # stay below the pole at e^r2 = (2 - a01) / a00
        hi = min(hi, math.log((2.0 - errors.alpha_01) / errors.alpha_00) * (1.0 - 1e-12))
    if h(lo) > 0:
        raise NoSolutionError(f"coupled r2 relation positive at the lower bracket r2={lo}")
    while h(hi) < 0:
        if hi >= BRACKET_MAX:
            raise NoSolutionError(
                f"no r2 root in ({lo}, {BRACKET_MAX}] for variant {variant!r} at r1={r1:.6g}")
        log.info("expanding r2 bracket beyond %.4g", hi)
        hi = min(2.0 * hi, BRACKET_MAX)
    return optimize.bisect(h, lo, hi, xtol=BISECT_XTOL)


def _l2(errors: ErrorSpec, r2: float) -> float:
    c2 = (1 - errors.alpha_01) / (1 - errors.alpha_00)
    arg = 1.0 - c2 * (1.0 - math.exp(-r2))
    if not 0.0 < arg < 1.0:
        raise InfeasibleThresholdError(f"l2 logarithm argument {arg:.6g} outside (0, 1) at r2={r2:.6g}")
    return math.log(arg)


def solve_rectangle(errors: ErrorSpec, l1: Optional[float] = None, variant: str = PRINTED) -> Rectangle:
    if l1 is None:
        l1 = default_l1(errors.alpha_00, errors.alpha_10)
    lo, hi = _l1_bounds(errors.alpha_00, errors.alpha_10)
    if not (lo < l1 < hi and l1 < 0):
        raise InfeasibleThresholdError(f"l1={l1} outside its feasible interval ({lo:.6g}, {hi:.6g})")
    r1 = _r1(errors, l1)
    r2 = _solve_r2(errors, r1, variant)
    return Rectangle(l1=l1, r1=r1, l2=_l2(errors, r2), r2=r2)


def rectangle_residuals(errors: ErrorSpec, rect: Rectangle, variant: str = PRINTED) -> Dict[str, float]:
    """Residuals of the alpha constraint and the three threshold relations at rect."""
    c1 = (1 - errors.alpha_10) / (1 - errors.alpha_00)
    c2 = (1 - errors.alpha_01) / (1 - errors.alpha_00)
    return {
        "constraint": (1 - errors.alpha_00) * (1 - errors.alpha_11)
        - (1 - errors.alpha_01) * (1 - errors.alpha_10),
        "r1": rect.r1 + math.log(1.0 - (1.0 - math.exp(rect.l1)) / c1),
        "coupled": coupled_residual(errors, rect.r1, variant)(rect.r2),
        "r2": rect.r2 + math.log(1.0 - (1.0 - math.exp(rect.l2)) / c2),
    }


def compare_variants(errors: ErrorSpec, l1: Optional[float] = None) -> Dict[str, Dict]:
    """Both readings of the coupled relation side by side; failures are reported, not raised."""
    out = {}
    for variant in VARIANTS:
        try:
            out[variant] = solve_rectangle(errors, l1, variant).to_dict()
        except (InfeasibleThresholdError, NoSolutionError) as exc:
            out[variant] = {"error": str(exc)}
    return out


def threshold_table(alpha_levels: Iterable[float], variant: str = PRINTED) -> pd.DataFrame:
    """Symmetric-alpha rectangles (default l1) over a grid of levels."""
    rows = []
    for alpha in alpha_levels:
        errors = ErrorSpec.symmetric(alpha)
        rect = solve_rectangle(errors, variant=variant)
        rows.append({"alpha": alpha, "variant": variant, **rect.to_dict()})
    return pd.DataFrame(rows, columns=["alpha", "variant", "l1", "r1", "l2", "r2"])
