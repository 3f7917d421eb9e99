"""
supersub.py
Closed-form sub/super-solution envelopes for the world-ij likelihood on the
rectangle, and rectangle estimates backed out of them.

Every envelope is a product of one factor per coordinate. With A the scaled
distances to the walls, B the first-order coefficient over |beta| and
s = sqrt(B^2 +- L), the factor for a coordinate whose world index is w is

    f = e^{p B} sinh(q s) / sinh(D s),   D = (r - l)/|beta|,  q = D - p,
    p = (x - l)/|beta| if w == 0 else (r - x)/|beta|

so f = 1 at the world's own wall and f = 0 at the opposite wall. The lower
envelope uses +L under the root, the upper one -L. If B^2 - L < 0 the upper
envelope continues through sin in place of sinh and is flagged.

A one-coordinate variant (dim 1) drops the second factor.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize

from errors import InfeasibleError, ParameterError
from generators import TestFunction, apply_jump_generator, jump_mass_M
from levy_sim import JumpMeasureSpec
from likelihood import WORLDS, JumpTestParams, LlrCoefficients, jump_llr_coefficients
from quadrature import QuadratureSpec, integrate_measure, tensor_integrate
from thresholds import ErrorSpec, Rectangle

log = logging.getLogger(__name__)

# -----------------------
# CONFIG
# -----------------------
LOWER = "lower"   # +L under the root
UPPER = "upper"   # -L under the root
R_BRACKET = (1e-8, 50.0)
R_BRACKET_MAX = 1e4
R_XTOL = 1e-12
R_POLE_GAP = 1e-9
K_BOUND_CAP = 1.0
K_BOUND_GRID = 16
DEFAULT_INTENSITY = 0.1
DEFAULT_BOUNDS = ((-1.0, 1.0), (-1.0, 1.0))
ERROR_WIRING = "error"            # target 1 - alpha
CONFIDENCE_WIRING = "confidence"  # target alpha
# -----------------------

Bounds = Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class EnvelopeParams:
    beta: Tuple[float, ...]
    gamma: Tuple[float, ...]
    C: Tuple[float, ...]
    M: float
    K_bound: float
    L_const: float
    bounds: Bounds
    world: str
    K: Tuple[JumpMeasureSpec, ...] = field(default=())

    def __post_init__(self):
        dim = len(self.beta)
        if dim not in (1, 2) or not (len(self.gamma) == len(self.C) == len(self.bounds) == dim):
            raise ParameterError("envelope parameters need one beta/gamma/C/bounds entry per coordinate (1 or 2)")
        if len(self.world) != dim or any(c not in "01" for c in self.world):
            raise ParameterError(f"world {self.world!r} does not match dimension {dim}")
        for k, b in enumerate(self.beta):
            if not (abs(b) > 0 and math.isfinite(b)):
                raise ParameterError(f"beta[{k}] must be finite and nonzero, got {b}")
        for k, (l, r) in enumerate(self.bounds):
            if not l < 0 < r:
                raise ParameterError(f"bounds[{k}] need l < 0 < r, got ({l}, {r})")
        if self.L_const < 0 or self.M < 0 or self.K_bound < 0:
            raise ParameterError(f"L_const, M and K_bound must be >= 0, got "
                                 f"{self.L_const}, {self.M}, {self.K_bound}")
        if not self.K:
            object.__setattr__(self, "K", tuple(JumpMeasureSpec() for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.beta)

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(int(c) for c in self.world)

    @property
    def B(self) -> Tuple[float, ...]:
        """B_ij: coordinate 1 carries (-1)^j C_1, coordinate 2 carries (-1)^i C_2."""
        idx = self.indices
        other = (idx[-1], idx[0])  # 1-D: the single index plays both roles
        return tuple((self.gamma[k] + (-1) ** other[k] * self.C[k]) / abs(self.beta[k])
                     for k in range(self.dim))

    @property
    def rect(self) -> Rectangle:
        if self.dim != 2:
            raise ParameterError("rectangle view needs two coordinates")
        (l1, r1), (l2, r2) = self.bounds
        return Rectangle(l1=l1, r1=r1, l2=l2, r2=r2)

    def with_world(self, world: str) -> "EnvelopeParams":
        return replace(self, world=world)

    def with_L(self, L_const: float) -> "EnvelopeParams":
        return replace(self, L_const=float(L_const))

    def with_bounds(self, bounds: Bounds) -> "EnvelopeParams":
        return replace(self, bounds=tuple(tuple(b) for b in bounds))

    def to_dict(self) -> Dict:
        return {"beta": list(self.beta), "gamma": list(self.gamma), "C": list(self.C),
                "M": self.M, "K_bound": self.K_bound, "L_const": self.L_const,
                "bounds": [list(b) for b in self.bounds], "world": self.world, "B": list(self.B)}


@dataclass(frozen=True)
class EnvelopeValue:
    lower: np.ndarray
    upper: np.ndarray
    complex_branch: bool = False


# -----------------------
# constants
# -----------------------
def compensator_constant(K1: JumpMeasureSpec, K2: JumpMeasureSpec, k: int,
                         quad: QuadratureSpec = None) -> float:
    """C_k = int y_k / (1 + |y|) K1(dy1) K2(dy2)."""
    if k not in (0, 1):
        raise ParameterError(f"coordinate must be 0 or 1, got {k}")

    def f(y1, y2):
        return (y1, y2)[k] / (1.0 + np.sqrt(y1 * y1 + y2 * y2))

    return tensor_integrate(f, K1, K2, quad)


def compensator_constant_1d(K: JumpMeasureSpec, quad: QuadratureSpec = None) -> float:
    if K.is_zero:
        return 0.0
    return integrate_measure(lambda y: y / (1.0 + y), K, quad)


# -----------------------
# envelope evaluation
# -----------------------
def _factor(x, bound: Tuple[float, float], beta_abs: float, B: float, s2: float, w: int):
    """Coordinate factor and its first two x-derivatives; flags the sin continuation."""
    l, r = bound
    x = np.asarray(x, dtype=float)
    D = (r - l) / beta_abs
    if w == 0:
        p, dp = (x - l) / beta_abs, 1.0 / beta_abs
    else:
        p, dp = (r - x) / beta_abs, -1.0 / beta_abs
    q = D - p
    trig = False
    with np.errstate(over="ignore", invalid="ignore"):
        if s2 > 0:
            s = math.sqrt(s2)
            den = -math.expm1(-2.0 * D * s)
            e = np.exp(p * (B - s))
            f = e * (-np.expm1(-2.0 * q * s)) / den
            h = s * e * (1.0 + np.exp(-2.0 * q * s)) / den
        elif s2 < 0:
            s = math.sqrt(-s2)
            e = np.exp(p * B)
            sd = math.sin(D * s)
            f = e * np.sin(q * s) / sd
            h = s * e * np.cos(q * s) / sd
            trig = True
        else:
            e = np.exp(p * B)
            f = e * q / D
            h = e / D
    f1 = dp * (B * f - h)
    h1 = dp * (B * h - s2 * f)
    f2 = dp * (B * f1 - h1)
    return f, f1, f2, trig


def _s2(params: EnvelopeParams, which: str, k: int) -> float:
    B = params.B[k]
    if which == LOWER:
        return B * B + params.L_const
    if which == UPPER:
        return B * B - params.L_const
    raise ParameterError(f"envelope must be {LOWER!r} or {UPPER!r}, got {which!r}")


def _clip(params: EnvelopeParams, k: int, x):
    l, r = params.bounds[k]
    return np.clip(x, l, r)


def envelope_parts(params: EnvelopeParams, which: str, x, y=None, clip: bool = False):
    """(value, grad, hess, trig) of one envelope; grad/hess in the (d1, d2) / (d11, d12, d22) layout."""
    coords = [x] if params.dim == 1 else [x, y]
    factors = []
    trig = False
    for k, xk in enumerate(coords):
        if clip:
            xk = _clip(params, k, xk)
        f, f1, f2, t = _factor(xk, params.bounds[k], abs(params.beta[k]), params.B[k],
                               _s2(params, which, k), params.indices[k])
        factors.append((f, f1, f2))
        trig = trig or t
    if params.dim == 1:
        f, f1, f2 = factors[0]
        return f, (f1, 0.0 * f), (f2, 0.0 * f, 0.0 * f), trig
    (a, a1, a2), (b, b1, b2) = factors
    return a * b, (a1 * b, a * b1), (a2 * b, a1 * b1, a * b2), trig


def eval_envelopes(params: EnvelopeParams, x, y=None) -> EnvelopeValue:
    lower, _, _, _ = envelope_parts(params, LOWER, x, y)
    upper, _, _, trig = envelope_parts(params, UPPER, x, y)
    if trig:
        log.warning("upper envelope for world %s uses the sin continuation (B^2 < L=%g)",
                    params.world, params.L_const)
    return EnvelopeValue(lower=lower, upper=upper, complex_branch=trig)


def envelope_test_function(params: EnvelopeParams, which: str) -> TestFunction:
    """Envelope as a generator test function; values outside the rectangle are clipped to its walls."""
    if params.dim != 2:
        raise ParameterError("generator test functions need two coordinates")
    return TestFunction(
        name=f"{which}_{params.world}",
        value=lambda x1, x2: envelope_parts(params, which, x1, x2, clip=True)[0],
        grad=lambda x1, x2: envelope_parts(params, which, x1, x2)[1],
        hess=lambda x1, x2: envelope_parts(params, which, x1, x2)[2],
        domain=tuple(params.bounds),
    )


# -----------------------
# parameter construction
# -----------------------
def estimate_k_bound(params: EnvelopeParams, n_grid: int = K_BOUND_GRID, n_quantiles: int = K_BOUND_GRID,
                     cap: float = K_BOUND_CAP) -> float:
    """
    sup of xi_ref(x + y) / xi_ref(x) - 1 over an interior grid and jump-size
    quantiles, with xi_ref the L = 0 envelope; clipped into [0, cap].
    """
    if not params.K or any(K.is_zero for K in params.K):
        return 0.0
    ref = params.with_L(0.0)
    u = (np.arange(n_quantiles) + 0.5) / n_quantiles
    axes = [np.linspace(l, r, n_grid + 2)[1:-1] for l, r in params.bounds]
    jumps = [K.quantile(u) for K in params.K]
    if params.dim == 1:
        x, y = np.meshgrid(axes[0], jumps[0], indexing="ij")
        base = envelope_parts(ref, LOWER, x, clip=True)[0]
        moved = envelope_parts(ref, LOWER, x + y, clip=True)[0]
    else:
        g1, g2, y1, y2 = np.meshgrid(axes[0], axes[1], jumps[0], jumps[1], indexing="ij")
        base = envelope_parts(ref, LOWER, g1, g2, clip=True)[0]
        moved = envelope_parts(ref, LOWER, g1 + y1, g2 + y2, clip=True)[0]
    ok = base > 0
    if not ok.any():
        return 0.0
    sup = float(np.max(moved[ok] / base[ok] - 1.0))
    return float(min(max(sup, 0.0), cap))


def _finish(params: EnvelopeParams, K_bound: Optional[float], L_const: Optional[float],
            k_cap: float) -> EnvelopeParams:
    if K_bound is None:
        K_bound = estimate_k_bound(params, cap=k_cap)
    L = L_const if L_const is not None else max(K_bound * params.M, params.M)
    return replace(params, K_bound=float(K_bound), L_const=float(L))


def envelope_params(coeffs: Tuple[LlrCoefficients, LlrCoefficients], bounds: Bounds, world: str,
                    quad: QuadratureSpec = None, K_bound: float = None, L_const: float = None,
                    k_cap: float = K_BOUND_CAP) -> EnvelopeParams:
    c1, c2 = coeffs
    K = (c1.K, c2.K)
    base = EnvelopeParams(
        beta=(c1.beta, c2.beta), gamma=(c1.gamma, c2.gamma),
        C=(compensator_constant(*K, 0, quad), compensator_constant(*K, 1, quad)),
        M=jump_mass_M(*K, quad), K_bound=0.0, L_const=0.0,
        bounds=tuple(tuple(b) for b in bounds), world=world, K=K)
    return _finish(base, K_bound, L_const, k_cap)


def envelope_params_1d(coeffs: LlrCoefficients, bounds: Tuple[float, float], world: str = "0",
                       quad: QuadratureSpec = None, K_bound: float = None, L_const: float = None,
                       k_cap: float = K_BOUND_CAP) -> EnvelopeParams:
    """One-coordinate reduction: the second factor is dropped, A/B/E/L kept for the first."""
    base = EnvelopeParams(
        beta=(coeffs.beta,), gamma=(coeffs.gamma,), C=(compensator_constant_1d(coeffs.K, quad),),
        M=coeffs.K.total_mass(quad), K_bound=0.0, L_const=0.0,
        bounds=(tuple(bounds),), world=world, K=(coeffs.K,))
    return _finish(base, K_bound, L_const, k_cap)


def default_envelope_params(world: str = "00", intensity: float = DEFAULT_INTENSITY,
                            L_const: float = None, bounds: Bounds = DEFAULT_BOUNDS,
                            quad: QuadratureSpec = None) -> EnvelopeParams:
    """sigma = 1, a = 1, exponential nu with the given intensity, rectangle (-1, 1)^2 unless given."""
    nu = JumpMeasureSpec.exponential(intensity, 1.0)
    params = JumpTestParams(a=(1.0, 1.0), sigma=(1.0, 1.0), measures=(nu, nu))
    coeffs = tuple(jump_llr_coefficients(params, k, int(world[k]), quad) for k in (0, 1))
    return envelope_params(coeffs, bounds, world, quad, L_const=L_const)


# -----------------------
# rectangle estimates
# -----------------------
@dataclass(frozen=True)
class RectangleCandidates:
    upper: Tuple[float, ...]      # r per coordinate from U(0, 0) = target
    lower: Tuple[float, ...]      # r per coordinate from L(0, 0) = target
    r: Tuple[float, ...]          # max of the two
    lefts: Tuple[float, ...]
    audit: List[Dict] = field(default_factory=list)

    def rectangle(self, which: str = "r") -> Union[Rectangle, Tuple[float, float]]:
        rs = getattr(self, which)
        if len(rs) == 1:
            return self.lefts[0], rs[0]
        return Rectangle(l1=self.lefts[0], r1=rs[0], l2=self.lefts[1], r2=rs[1])

    def to_dict(self) -> Dict:
        return {"upper": list(self.upper), "lower": list(self.lower), "r": list(self.r),
                "l": list(self.lefts), "audit": self.audit}


def _solve_r(params: EnvelopeParams, which: str, k: int, l: float, target: float) -> float:
    def g(r):
        bounds = list(params.bounds)
        bounds[k] = (l, r)
        p = params.with_bounds(bounds)
        f, _, _, _ = _factor(0.0, (l, r), abs(p.beta[k]), p.B[k], _s2(p, which, k), p.indices[k])
        return float(f) - target

    lo, hi = R_BRACKET
    s2 = _s2(params, which, k)
    # the sin ratio blows up where (r - l) s / |beta| reaches pi; stay on its first branch
    pole = l + abs(params.beta[k]) * math.pi / math.sqrt(-s2) if s2 < 0 else math.inf
    edge = pole - R_POLE_GAP * (pole - l) if s2 < 0 else math.inf
    if not edge > lo:
        raise InfeasibleError(f"{which} envelope factor has its pole at r={pole:.6g} <= {lo}")
    if not g(lo) < 0:
        raise InfeasibleError(f"{which} envelope already exceeds {target:.6g} at r={lo}")
    hi = min(hi, edge)
    while not g(hi) > 0:
        if hi >= R_BRACKET_MAX or hi >= edge:
            raise InfeasibleError(
                f"{which} envelope factor at 0 never reaches {target:.6g} for r <= {hi:g}")
        log.info("expanding r bracket beyond %.4g", hi)
        hi = min(2.0 * hi, R_BRACKET_MAX, edge)
    return optimize.bisect(g, lo, hi, xtol=R_XTOL)


def rectangle_from_envelopes(alphas: Union[ErrorSpec, float], params: EnvelopeParams, l1: float,
                             l2: float = None, wiring: str = ERROR_WIRING) -> RectangleCandidates:
    """
    Per coordinate k and per world whose k-th index is 0, solve for r_k with the
    envelope's k-th factor at 0 equal to sqrt(1 - alpha_ij) (two coordinates) or
    1 - alpha (one coordinate, "error" wiring; alpha itself for "confidence").
    The largest r over those worlds is kept for each envelope.
    """
    if wiring not in (ERROR_WIRING, CONFIDENCE_WIRING):
        raise ParameterError(f"wiring must be {ERROR_WIRING!r} or {CONFIDENCE_WIRING!r}, got {wiring!r}")
    lefts = (l1,) if params.dim == 1 else (l1, l2)
    if any(l is None or not l < 0 for l in lefts):
        raise ParameterError(f"left thresholds must be negative, got {lefts}")
    # placeholder right walls, replaced coordinate by coordinate during the solve
    template = params.with_bounds([(l, 1.0) for l in lefts])

    if params.dim == 1:
        alpha = float(alphas)
        if not 0 < alpha < 1:
            raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
        targets = {"0": 1.0 - alpha if wiring == ERROR_WIRING else alpha}
        worlds_for = [("0",)]
    else:
        if not isinstance(alphas, ErrorSpec):
            raise ParameterError("two coordinates need an ErrorSpec")
        pick = (lambda a: 1.0 - a) if wiring == ERROR_WIRING else (lambda a: a)
        targets = {w: math.sqrt(pick(alphas.world(w))) for w in WORLDS}
        worlds_for = [("00", "01"), ("00", "10")]

    audit = []
    result = {UPPER: [], LOWER: []}
    for k, worlds in enumerate(worlds_for):
        for which in (UPPER, LOWER):
            best = -math.inf
            for w in worlds:
                r = _solve_r(template.with_world(w), which, k, lefts[k], targets[w])
                audit.append({"coordinate": k, "world": w, "envelope": which,
                              "target": targets[w], "r": r})
                best = max(best, r)
            result[which].append(best)
    upper, lower = tuple(result[UPPER]), tuple(result[LOWER])
    return RectangleCandidates(upper=upper, lower=lower,
                               r=tuple(max(u, v) for u, v in zip(upper, lower)),
                               lefts=lefts, audit=audit)


# -----------------------
# grids and checks
# -----------------------
def _axis(bound: Tuple[float, float], n: int) -> np.ndarray:
    return np.linspace(bound[0], bound[1], n)


def envelope_grid(params: EnvelopeParams, n: int = 64) -> pd.DataFrame:
    """Both envelopes on an n x n grid including the walls (x, y, lower, upper)."""
    xs = _axis(params.bounds[0], n)
    if params.dim == 1:
        val = eval_envelopes(params, xs)
        return pd.DataFrame({"x": xs, "y": 0.0, "lower": val.lower, "upper": val.upper})
    gx, gy = np.meshgrid(xs, _axis(params.bounds[1], n), indexing="ij")
    val = eval_envelopes(params, gx, gy)
    return pd.DataFrame({"x": gx.ravel(), "y": gy.ravel(),
                         "lower": np.ravel(val.lower), "upper": np.ravel(val.upper)})


def envelope_cross_sections(params: EnvelopeParams, n: int = 128) -> pd.DataFrame:
    """Sections along y = l2 and y = 0."""
    if params.dim != 2:
        raise ParameterError("cross sections need two coordinates")
    xs = _axis(params.bounds[0], n)
    frames = []
    for label, level in (("y=l2", params.bounds[1][0]), ("y=0", 0.0)):
        val = eval_envelopes(params, xs, np.full_like(xs, level))
        frames.append(pd.DataFrame({"section": label, "x": xs, "lower": val.lower, "upper": val.upper}))
    return pd.concat(frames, ignore_index=True)


def gap_sup_norm(params: EnvelopeParams, n: int = 64) -> float:
    grid = envelope_grid(params, n)
    return float((grid["upper"] - grid["lower"]).max())


def _local_coeffs(params: EnvelopeParams) -> Tuple[LlrCoefficients, LlrCoefficients]:
    return tuple(LlrCoefficients(beta=params.beta[k], m=0.0, gamma=params.gamma[k], K=JumpMeasureSpec(),
                                 sign=1) for k in (0, 1))


def _shifted_factor_integral(params: EnvelopeParams, which: str, k: int, x: float,
                             quad: QuadratureSpec) -> float:
    """int f_k(x + y) K_k(dy) with f_k held at its wall value once x + y passes r_k."""
    K = params.K[k]
    l, r = params.bounds[k]
    args = (abs(params.beta[k]), params.B[k], _s2(params, which, k), params.indices[k])
    kink = r - x
    inside = integrate_measure(lambda y: float(_factor(x + y, (l, r), *args)[0]), K, quad, upper=kink)
    wall = float(_factor(r, (l, r), *args)[0])
    beyond = K.total_mass(quad) - integrate_measure(lambda y: 1.0, K, quad, upper=kink)
    return inside + wall * beyond


def _envelope_generator(params: EnvelopeParams, which: str, xi: TestFunction, x: Tuple[float, float],
                        quad: QuadratureSpec) -> float:
    """
    Jump generator of one envelope at an interior point. The envelope is a
    product of coordinate factors, so the double jump integral splits into
    one-dimensional pieces: I_1 I_2 - xi(x) M - C_1 d_1 xi - C_2 d_2 xi.
    """
    local = apply_jump_generator(params.world, 0.0, _local_coeffs(params), xi, x, quad)
    if not params.K or any(K.is_zero for K in params.K):
        return local
    i, j = params.indices
    g1, g2 = (float(v) for v in xi.grad(*x))
    prod = (_shifted_factor_integral(params, which, 0, x[0], quad)
            * _shifted_factor_integral(params, which, 1, x[1], quad))
    jump = prod - float(xi.value(*x)) * params.M - params.C[0] * g1 - params.C[1] * g2
    return local + (-1) ** (i + j) * jump


def _pattern(pos: int, neg: int) -> str:
    if pos and neg:
        return "mixed"
    if pos:
        return "+"
    return "-" if neg else "0"


def envelope_pide_sign_check(params: EnvelopeParams, grid_n: int = 8, quad: QuadratureSpec = None,
                             worlds: Iterable[str] = WORLDS, zero_tol: float = 1e-12) -> Dict:
    """
    Generator residual of both envelopes on an interior grid, per world.
    identity_error compares against the separated no-jump values -L * U and +L * L_env.
    """
    if params.dim != 2:
        raise ParameterError("the sign check needs two coordinates")
    if grid_n < 8:
        raise ParameterError(f"grid_n must be >= 8, got {grid_n}")
    axes = [np.linspace(l, r, grid_n + 2)[1:-1] for l, r in params.bounds]
    report = {"grid_n": grid_n, "L_const": params.L_const, "M": params.M, "worlds": {}}
    for w in worlds:
        p = params.with_world(w)
        entry = {}
        for which, expected in ((UPPER, -p.L_const), (LOWER, p.L_const)):
            xi = envelope_test_function(p, which)
            res, err = [], 0.0
            for x1 in axes[0]:
                for x2 in axes[1]:
                    g = _envelope_generator(p, which, xi, (x1, x2), quad)
                    v = float(xi.value(x1, x2))
                    res.append(g)
                    err = max(err, abs(g - expected * v))
            res = np.asarray(res)
            scale = max(1.0, float(np.abs(res).max()))
            pos = int((res > zero_tol * scale).sum())
            neg = int((res < -zero_tol * scale).sum())
            entry[which] = {
                "positive": pos, "negative": neg, "zero": int(res.size - pos - neg),
                "min": float(res.min()), "max": float(res.max()),
                "uniform": pos == 0 or neg == 0,
                "pattern": _pattern(pos, neg),
                "identity_error": err,
            }
        report["worlds"][w] = entry
    return report
