"""
quadrature.py
Integrals against one-dimensional jump measures on (0, inf) and their products.

One-dimensional integrals use QUADPACK's adaptive Gauss-Kronrod rule
(scipy.integrate.quad) panel by panel: (0, 1), (1, inf) with the tail mapped
through x = 1/u, or the breakpoints of a tabulated density. Two-dimensional
integrals over K1(dy1) K2(dy2) use tensorised Gauss-Legendre panels with the
node count doubled until two successive estimates agree.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from scipy import integrate

from errors import MeasureIntegrabilityError, ParameterError

log = logging.getLogger(__name__)

# -----------------------
# CONFIG
# -----------------------
DEFAULT_ABS_TOL = 1e-10
DEFAULT_REL_TOL = 1e-10
DEFAULT_LIMIT = 200
DEFAULT_NODES = 48
DEFAULT_TENSOR_TOL = 1e-9
MAX_NODES = 768
# -----------------------


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = DEFAULT_ABS_TOL
    rel_tol: float = DEFAULT_REL_TOL
    limit: int = DEFAULT_LIMIT
    tail_substitution: bool = True
    nodes: int = DEFAULT_NODES
    max_nodes: int = MAX_NODES
    tensor_tol: float = DEFAULT_TENSOR_TOL

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ParameterError(f"quadrature abs_tol must be > 0, got {self.abs_tol}")
        if self.rel_tol < 0:
            raise ParameterError(f"quadrature rel_tol must be >= 0, got {self.rel_tol}")
        if self.nodes < 2 or self.max_nodes < self.nodes:
            raise ParameterError(f"bad node counts nodes={self.nodes} max_nodes={self.max_nodes}")


def _safe_product(f: Callable, density: Callable) -> Callable:
    # density underflows to 0 far in the tail, where f may overflow
    def g(x):
        d = float(density(x))
        if d == 0.0:
            return 0.0
        return float(f(x)) * d
    return g


def _quad(g: Callable, a: float, b: float, spec: QuadratureSpec, points=None) -> float:
    kwargs = dict(epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=spec.limit)
    if points is not None and len(points) and math.isfinite(b):
        kwargs["points"] = list(points)
        kwargs["limit"] = max(spec.limit, 2 * len(points) + 50)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(g, a, b, **kwargs)
        except integrate.IntegrationWarning as exc:
            raise MeasureIntegrabilityError(
                f"quadrature on ({a}, {b}) did not converge: {exc}") from exc
    if not math.isfinite(value):
        raise MeasureIntegrabilityError(f"quadrature on ({a}, {b}) is not finite ({value})")
    return value


def integrate_measure(f: Callable[[float], float], measure, spec: QuadratureSpec = None,
                      upper: float = math.inf) -> float:
    """
    Integral of f(x) against measure(dx) = measure.density(x) dx over (0, upper).
    `measure` must expose density(x) and panels() -> [(a, b), ...] (b may be inf).
    """
    spec = spec or QuadratureSpec()
    g = _safe_product(f, measure.density)
    total = 0.0
    for a, b in measure.panels():
        if a >= upper:
            break
        b = min(b, upper)
        if math.isinf(b):
            if spec.tail_substitution:
                def tail(u, g=g):
                    x = 1.0 / u
                    return g(x) * x * x
                total += _quad(tail, 0.0, 1.0 / a, spec)
            else:
                total += _quad(g, a, b, spec)
        else:
            total += _quad(g, a, b, spec)
    return total


def measure_nodes(measure, n: int, spec: QuadratureSpec = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes/weights (n per panel) with the measure density folded
    into the weights. Nodes where the density vanishes are dropped.
    """
    spec = spec or QuadratureSpec()
    t, w = np.polynomial.legendre.leggauss(n)
    xs: List[np.ndarray] = []
    ws: List[np.ndarray] = []
    for a, b in measure.panels():
        if math.isinf(b):
            if not spec.tail_substitution:
                raise ParameterError("tensor quadrature needs tail_substitution for infinite panels")
            hi = 1.0 / a
            u = 0.5 * hi * (t + 1.0)
            x = 1.0 / u
            wx = 0.5 * hi * w * x * x
        else:
            x = a + 0.5 * (b - a) * (t + 1.0)
            wx = 0.5 * (b - a) * w
        xs.append(x)
        ws.append(wx)
    x = np.concatenate(xs)
    wx = np.concatenate(ws) * measure.density(x)
    keep = wx > 0
    return x[keep], wx[keep]


def tensor_integrate(f2: Callable[[np.ndarray, np.ndarray], np.ndarray],
                     measure1, measure2, spec: QuadratureSpec = None) -> float:
    """Integral of f2(y1, y2) against measure1(dy1) measure2(dy2)."""
    spec = spec or QuadratureSpec()
    if measure1.total_mass() == 0.0 or measure2.total_mass() == 0.0:
        return 0.0

    def estimate(n):
        y1, w1 = measure_nodes(measure1, n, spec)
        y2, w2 = measure_nodes(measure2, n, spec)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = f2(y1[:, None], y2[None, :])
        vals = np.where(np.isfinite(vals), vals, 0.0)
        return float(w1 @ vals @ w2)

    n = spec.nodes
    prev = estimate(n)
    change = math.inf
    while 2 * n <= spec.max_nodes:
        n *= 2
        cur = estimate(n)
        change = abs(cur - prev)
        if change <= max(spec.tensor_tol, spec.rel_tol * abs(cur)):
            log.debug("tensor quadrature settled at %d nodes per panel", n)
            return cur
        prev = cur
    raise MeasureIntegrabilityError(
        f"tensor quadrature did not settle below {spec.tensor_tol} with {n} nodes per panel "
        f"(last change {change:.3e})")
