"""
levy_sim.py
Seeded simulation of one- and two-dimensional Levy processes: drifted Brownian
motion plus a finite-activity (compound-Poisson) jump part.

Jump epochs are drawn exactly from exponential inter-arrival times and merged
into the Euler grid, so every path carries its jump times as grid points.
All randomness flows from make_rng(seed, *stream), one private stream per call.

Usage:
  from levy_sim import JumpMeasureSpec, simulate_compound_poisson
  path = simulate_compound_poisson(JumpMeasureSpec.exponential(2.0, 0.5), horizon=10, seed=7)
  path.to_frame().to_csv("cp.csv", index=False)
"""
import functools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ParameterError, UnsupportedMeasureError
from quadrature import QuadratureSpec, integrate_measure

log = logging.getLogger(__name__)

# -----------------------
# CONFIG
# -----------------------
DEFAULT_SEED = 20240601
EXPONENTIAL = "exponential"
TABULATED = "tabulated"
LLR_NONE = "none"
LLR_DENSITY = "density"          # K = a log(1+x) (1+a x) nu(dx)
LLR_PUSHFORWARD = "pushforward"  # K = image of (1+a x) nu(dx) under x -> log(1+a x)
EXP_TAIL_SCALES = 60.0           # exponential support truncated here for sampling grids
CDF_POINTS = 4096
# -----------------------


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Private generator for (seed, stream...) - independent of call order elsewhere."""
    keys = [int(seed)] + [int(s) for s in stream]
    if any(k < 0 for k in keys):
        raise ParameterError(f"seed and stream keys must be nonnegative, got {keys}")
    return np.random.default_rng(np.random.SeedSequence(keys))


@dataclass(frozen=True)
class JumpMeasureSpec:
    """
    Finite Levy measure on (0, inf).

    base density   exponential: intensity * exp(-x/scale) / scale
                   tabulated:   intensity * piecewise-linear table
    tilt           (1 + tilt_a * x) multiplies the base density (nu_k)
    llr transform  optional log-likelihood jump measure built from the tilted one
    """
    intensity: float = 0.0
    scale: float = 1.0
    tilt_a: float = 0.0
    family: str = EXPONENTIAL
    table_x: Tuple[float, ...] = ()
    table_density: Tuple[float, ...] = ()
    llr_a: float = 0.0
    llr_mode: str = LLR_NONE

    def __post_init__(self):
        if not (self.intensity >= 0 and math.isfinite(self.intensity)):
            raise UnsupportedMeasureError(f"intensity must be finite and >= 0, got {self.intensity}")
        if not self.scale > 0:
            raise ParameterError(f"scale must be > 0, got {self.scale}")
        if self.tilt_a < 0:
            raise ParameterError(f"tilt_a must be >= 0, got {self.tilt_a}")
        if self.llr_a < 0:
            raise ParameterError(f"llr_a must be >= 0, got {self.llr_a}")
        if self.llr_mode not in (LLR_NONE, LLR_DENSITY, LLR_PUSHFORWARD):
            raise ParameterError(f"unknown llr_mode {self.llr_mode!r}")
        if self.family == TABULATED:
            tx = np.asarray(self.table_x, dtype=float)
            td = np.asarray(self.table_density, dtype=float)
            if tx.size < 2 or tx.size != td.size:
                raise ParameterError("tabulated density needs matching x/density tables of length >= 2")
            if tx[0] < 0 or np.any(np.diff(tx) <= 0):
                raise ParameterError("tabulated x must be >= 0 and strictly increasing")
            if np.any(td < 0) or not np.all(np.isfinite(td)):
                raise ParameterError("tabulated density must be finite and nonnegative")
        elif self.family != EXPONENTIAL:
            raise UnsupportedMeasureError(f"unsupported jump family {self.family!r}")

    # ----- constructors -----
    @classmethod
    def exponential(cls, intensity: float, scale: float = 1.0, tilt_a: float = 0.0) -> "JumpMeasureSpec":
        return cls(intensity=float(intensity), scale=float(scale), tilt_a=float(tilt_a))

    @classmethod
    def tabulated(cls, x: Sequence[float], density: Sequence[float],
                  intensity: float = 1.0, tilt_a: float = 0.0) -> "JumpMeasureSpec":
        return cls(intensity=float(intensity), tilt_a=float(tilt_a), family=TABULATED,
                   table_x=tuple(float(v) for v in x), table_density=tuple(float(v) for v in density))

    @classmethod
    def point_mass(cls, location: float, mass: float = 1.0, width: float = 1e-3) -> "JumpMeasureSpec":
        """Narrow triangular density standing in for mass * delta_location."""
        if not (0 < width < location):
            raise ParameterError(f"need 0 < width < location, got width={width} location={location}")
        return cls.tabulated([location - width, location, location + width],
                             [0.0, 1.0 / width, 0.0], intensity=mass)

    def with_tilt(self, a: float) -> "JumpMeasureSpec":
        return _replace(self, tilt_a=float(a))

    def llr_measure(self, a: float, mode: str = LLR_DENSITY) -> "JumpMeasureSpec":
        """Jump measure of the log-likelihood ratio for tilt a (see likelihood.jump_llr_coefficients)."""
        return _replace(self, tilt_a=float(a), llr_a=float(a), llr_mode=mode)

    # ----- densities -----
    @property
    def is_zero(self) -> bool:
        if self.intensity == 0.0:
            return True
        return self.llr_mode != LLR_NONE and self.llr_a == 0.0

    def base_density(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == EXPONENTIAL:
            with np.errstate(over="ignore"):
                d = self.intensity * np.exp(-np.abs(x) / self.scale) / self.scale
        else:
            d = self.intensity * np.interp(x, self.table_x, self.table_density, left=0.0, right=0.0)
        return np.where(x > 0, d, 0.0)

    def tilted_density(self, x):
        x = np.asarray(x, dtype=float)
        return (1.0 + self.tilt_a * x) * self.base_density(x)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros_like(x)
        if self.llr_mode == LLR_NONE:
            return self.tilted_density(x)
        if self.llr_mode == LLR_DENSITY:
            return self.llr_a * np.log1p(np.maximum(x, 0.0)) * self.tilted_density(x)
        # pushforward: y = log(1 + a x)  =>  x = (e^y - 1)/a, dx/dy = e^y / a
        y = np.maximum(x, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            xs = np.expm1(y) / self.llr_a
            d = self.tilted_density(xs) * np.exp(y) / self.llr_a
        return np.where((x > 0) & np.isfinite(d), d, 0.0)

    def _to_llr_axis(self, v: float) -> float:
        if self.llr_mode == LLR_PUSHFORWARD:
            return math.log1p(self.llr_a * v)
        return v

    def upper(self) -> float:
        if self.family == EXPONENTIAL:
            return math.inf
        return self._to_llr_axis(self.table_x[-1])

    def panels(self) -> List[Tuple[float, float]]:
        if self.family == EXPONENTIAL:
            return [(0.0, 1.0), (1.0, math.inf)]
        pts = sorted({self._to_llr_axis(max(v, 0.0)) for v in self.table_x} | {0.0, 1.0})
        top = self.upper()
        pts = [p for p in pts if p <= top]
        return [(a, b) for a, b in zip(pts[:-1], pts[1:]) if b > a]

    # ----- integrals -----
    def total_mass(self, quad: QuadratureSpec = None) -> float:
        return _mass(self, quad or QuadratureSpec())

    def moment(self, k: int = 1, quad: QuadratureSpec = None) -> float:
        if self.is_zero:
            return 0.0
        if self.family == EXPONENTIAL and self.llr_mode == LLR_NONE:
            eta = self.scale
            return self.intensity * (math.factorial(k) * eta ** k
                                     + self.tilt_a * math.factorial(k + 1) * eta ** (k + 1))
        return integrate_measure(lambda x: x ** k, self, quad)

    # ----- sampling -----
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n jump sizes from the normalised measure."""
        if n == 0:
            return np.empty(0)
        if self.is_zero:
            raise UnsupportedMeasureError("cannot sample sizes from a zero measure")
        if self.family == EXPONENTIAL and self.llr_mode == LLR_NONE:
            # (1 + a x) e^{-x/eta}/eta is a mixture of Exp(eta) and Gamma(2, eta)
            p_gamma = self.tilt_a * self.scale / (1.0 + self.tilt_a * self.scale)
            shape = np.where(rng.random(n) < p_gamma, 2.0, 1.0)
            return rng.gamma(shape, self.scale)
        return self.quantile(rng.random(n))

    def quantile(self, p):
        grid, cdf = _cdf_table(self)
        return np.interp(np.asarray(p, dtype=float), cdf, grid)


def _replace(spec: JumpMeasureSpec, **changes) -> JumpMeasureSpec:
    from dataclasses import replace
    return replace(spec, **changes)


@functools.lru_cache(maxsize=512)
def _mass(spec: JumpMeasureSpec, quad: QuadratureSpec) -> float:
    if spec.is_zero:
        return 0.0
    if spec.family == EXPONENTIAL and spec.llr_mode == LLR_NONE:
        return spec.intensity * (1.0 + spec.tilt_a * spec.scale)
    mass = integrate_measure(lambda x: 1.0, spec, quad)
    if not math.isfinite(mass):
        raise UnsupportedMeasureError(f"jump measure has infinite mass: {spec}")
    return mass


@functools.lru_cache(maxsize=256)
def _cdf_table(spec: JumpMeasureSpec) -> Tuple[np.ndarray, np.ndarray]:
    top = spec.upper()
    if math.isinf(top):
        top = spec._to_llr_axis(EXP_TAIL_SCALES * spec.scale)
    pieces = []
    for a, b in spec.panels():
        b = min(b, top)
        if b > a:
            pieces.append(np.linspace(a, b, CDF_POINTS // 4 if b - a <= 1 else CDF_POINTS))
    grid = np.unique(np.concatenate(pieces))
    dens = spec.density(grid)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    if cum[-1] <= 0:
        raise UnsupportedMeasureError("jump measure has no mass on its sampling grid")
    cdf = cum / cum[-1]
    # strictly increasing cdf for interpolation
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return grid[keep], cdf[keep]


@dataclass(frozen=True)
class LevyCharacteristics:
    drift: float
    diffusion_var: float
    jumps: Optional[JumpMeasureSpec] = None
    jump_sign: int = 1

    def __post_init__(self):
        if not self.diffusion_var >= 0:
            raise ParameterError(f"diffusion_var must be >= 0, got {self.diffusion_var}")
        if self.jump_sign not in (-1, 1):
            raise ParameterError(f"jump_sign must be +1 or -1, got {self.jump_sign}")

    @property
    def has_jumps(self) -> bool:
        return self.jumps is not None and not self.jumps.is_zero

    def jump_mass(self, quad: QuadratureSpec = None) -> float:
        return self.jumps.total_mass(quad) if self.has_jumps else 0.0

    def jump_mean(self, quad: QuadratureSpec = None) -> float:
        """Signed integral of y against the jump measure."""
        return self.jump_sign * self.jumps.moment(1, quad) if self.has_jumps else 0.0

    def compensator(self, quad: QuadratureSpec = None) -> float:
        """Signed integral of y/(1+|y|) against the jump measure."""
        if not self.has_jumps:
            return 0.0
        return self.jump_sign * integrate_measure(lambda y: y / (1.0 + y), self.jumps, quad)

    def mean_slope(self, quad: QuadratureSpec = None) -> float:
        return self.drift + self.jump_mean(quad)


@dataclass(frozen=True)
class SamplePath:
    times: np.ndarray
    values: np.ndarray
    dt: float
    jump_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    start: float = 0.0

    def __post_init__(self):
        if self.times.shape != self.values.shape or self.times.size < 1:
            raise ParameterError("times and values must be aligned, non-empty arrays")
        if self.times[0] != 0.0:
            raise ParameterError(f"path must start at time 0, got {self.times[0]}")
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("path times must be strictly increasing")
        if self.values[0] != self.start:
            raise ParameterError(f"path starts at {self.values[0]}, declared {self.start}")

    @property
    def is_jump(self) -> np.ndarray:
        flags = np.zeros(self.times.size, dtype=bool)
        flags[self.jump_indices] = True
        return flags

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"time": self.times, "value": self.values, "is_jump": self.is_jump})


@dataclass(frozen=True)
class SamplePath2D:
    first: SamplePath
    second: SamplePath

    def __post_init__(self):
        if self.first.times.shape != self.second.times.shape or \
                not np.array_equal(self.first.times, self.second.times):
            raise ParameterError("both coordinates must share one time grid")

    @property
    def times(self) -> np.ndarray:
        return self.first.times

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "time": self.times,
            "value": self.first.values,
            "value2": self.second.values,
            "is_jump": self.first.is_jump | self.second.is_jump,
        })


# -----------------------
# grid helpers
# -----------------------
def _check_grid(horizon: float, dt: float) -> None:
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if not horizon >= dt:
        raise ParameterError(f"horizon must be >= dt, got horizon={horizon} dt={dt}")


def euler_grid(horizon: float, dt: float) -> np.ndarray:
    n = max(1, int(math.ceil(horizon / dt - 1e-9)))
    return np.minimum(np.arange(n + 1) * dt, horizon)


def jump_epochs(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Event times in (0, horizon) from exponential inter-arrival times with the given rate."""
    if rate <= 0:
        return np.empty(0)
    expected = rate * horizon
    block = int(expected + 5.0 * math.sqrt(expected) + 16)
    out = []
    t = 0.0
    while True:
        times = t + np.cumsum(rng.exponential(1.0 / rate, size=block))
        out.append(times[times < horizon])
        if times[-1] >= horizon:
            break
        t = times[-1]
    return np.concatenate(out)


def _draw_jumps(spec: Optional[JumpMeasureSpec], horizon: float, rng: np.random.Generator,
                quad: QuadratureSpec = None) -> Tuple[np.ndarray, np.ndarray]:
    if spec is None or spec.is_zero:
        return np.empty(0), np.empty(0)
    mass = spec.total_mass(quad)
    if not math.isfinite(mass):
        raise UnsupportedMeasureError(f"infinite jump mass {mass}")
    epochs = jump_epochs(mass, horizon, rng)
    return epochs, spec.sample(rng, epochs.size)


def _merge(grid: np.ndarray, *epochs: np.ndarray) -> np.ndarray:
    return np.unique(np.concatenate([grid, *epochs]))


def _place(times: np.ndarray, epochs: np.ndarray, sizes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-interval jump totals on the merged grid, plus the grid indices of the epochs."""
    idx = np.searchsorted(times, epochs)
    inc = np.zeros(times.size - 1)
    np.add.at(inc, idx - 1, sizes)
    return inc, idx


# -----------------------
# simulators
# -----------------------
def simulate_bm_drift(drift: float, vol: float, horizon: float, dt: float,
                      seed: int = DEFAULT_SEED, path_index: int = 0) -> SamplePath:
    """dz = drift dt + vol dW on an Euler grid."""
    _check_grid(horizon, dt)
    if vol < 0:
        raise ParameterError(f"vol must be >= 0, got {vol}")
    rng = make_rng(seed, path_index)
    times = euler_grid(horizon, dt)
    noise = vol * np.sqrt(np.diff(times)) * rng.standard_normal(times.size - 1)
    values = drift * times + np.concatenate([[0.0], np.cumsum(noise)])
    return SamplePath(times=times, values=values, dt=dt)


def simulate_compound_poisson(spec: JumpMeasureSpec, horizon: float, seed: int = DEFAULT_SEED,
                              dt: float = None, path_index: int = 0,
                              quad: QuadratureSpec = None) -> SamplePath:
    """Event-driven compound-Poisson path; dt, when given, adds an Euler grid."""
    if not horizon > 0:
        raise ParameterError(f"horizon must be > 0, got {horizon}")
    rng = make_rng(seed, path_index)
    epochs, sizes = _draw_jumps(spec, horizon, rng, quad)
    grid = euler_grid(horizon, dt) if dt else np.array([0.0, horizon])
    times = _merge(grid, epochs)
    inc, idx = _place(times, epochs, sizes)
    values = np.concatenate([[0.0], np.cumsum(inc)])
    return SamplePath(times=times, values=values, dt=dt or horizon, jump_indices=idx)


def simulate_levy(chars: LevyCharacteristics, horizon: float, dt: float,
                  seed: int = DEFAULT_SEED, start: float = 0.0, compensate: bool = False,
                  path_index: int = 0, quad: QuadratureSpec = None) -> SamplePath:
    """
    One-dimensional Levy path for (drift, diffusion_var, jump_sign * jumps).
    compensate=True subtracts jump_sign * int y/(1+y) K(dy) from the drift.
    """
    _check_grid(horizon, dt)
    rng = make_rng(seed, path_index)
    epochs, sizes = _draw_jumps(chars.jumps if chars.has_jumps else None, horizon, rng, quad)
    times = _merge(euler_grid(horizon, dt), epochs)
    steps = np.diff(times)
    drift = chars.drift - (chars.compensator(quad) if compensate else 0.0)
    inc = drift * steps + math.sqrt(chars.diffusion_var) * np.sqrt(steps) * rng.standard_normal(steps.size)
    jump_inc, idx = _place(times, epochs, chars.jump_sign * sizes)
    values = start + np.concatenate([[0.0], np.cumsum(inc + jump_inc)])
    return SamplePath(times=times, values=values, dt=dt, jump_indices=idx, start=start)


def covariance_root(sigma_matrix) -> np.ndarray:
    """Symmetric square root of a 2x2 covariance matrix (rank-deficient allowed)."""
    s = np.asarray(sigma_matrix, dtype=float)
    if s.shape != (2, 2):
        raise ParameterError(f"sigma_matrix must be 2x2, got shape {s.shape}")
    scale = max(1.0, float(np.abs(s).max()))
    if abs(s[0, 1] - s[1, 0]) > 1e-12 * scale:
        raise ParameterError(f"sigma_matrix is not symmetric: {s.tolist()}")
    vals, vecs = np.linalg.eigh(s)
    if vals.min() < -1e-12 * scale:
        raise ParameterError(f"sigma_matrix is not nonnegative definite (eigenvalues {vals.tolist()})")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def simulate_levy2d(mu: Sequence[float], sigma_matrix, specs: Sequence[Optional[JumpMeasureSpec]],
                    horizon: float, dt: float, seed: int = DEFAULT_SEED,
                    path_index: int = 0, quad: QuadratureSpec = None) -> SamplePath2D:
    """
    Two-dimensional Levy path with triplet (mu, Sigma, nu1 x nu2): correlated
    diffusion through the symmetric root of Sigma, independent jump parts.
    """
    _check_grid(horizon, dt)
    root = covariance_root(sigma_matrix)
    rng = make_rng(seed, path_index)
    e1, s1 = _draw_jumps(specs[0], horizon, rng, quad)
    e2, s2 = _draw_jumps(specs[1], horizon, rng, quad)
    times = _merge(euler_grid(horizon, dt), e1, e2)
    steps = np.diff(times)
    z = rng.standard_normal((steps.size, 2)) * np.sqrt(steps)[:, None]
    diff_inc = z @ root.T + np.outer(steps, np.asarray(mu, dtype=float))
    paths = []
    for k, (epochs, sizes) in enumerate(((e1, s1), (e2, s2))):
        jump_inc, idx = _place(times, epochs, sizes)
        values = np.concatenate([[0.0], np.cumsum(diff_inc[:, k] + jump_inc)])
        paths.append(SamplePath(times=times, values=values, dt=dt, jump_indices=idx))
    return SamplePath2D(paths[0], paths[1])


def sample_increments(chars: LevyCharacteristics, t: float, n: int, rng: np.random.Generator,
                      z: np.ndarray = None, compensate: bool = False,
                      quad: QuadratureSpec = None) -> np.ndarray:
    """n independent increments over [0, t]; z overrides the standard normals."""
    if z is None:
        z = rng.standard_normal(n)
    drift = chars.drift - (chars.compensator(quad) if compensate else 0.0)
    out = drift * t + math.sqrt(chars.diffusion_var * t) * z
    if chars.has_jumps:
        counts = rng.poisson(chars.jump_mass(quad) * t, size=n)
        sizes = chars.jumps.sample(rng, int(counts.sum()))
        owner = np.repeat(np.arange(n), counts)
        out = out + chars.jump_sign * np.bincount(owner, weights=sizes, minlength=n)
    return out
