"""
market.py
Barndorff-Nielsen-Shephard price model with theta-mixed subordinators,
daily price ingestion and fitting, and the one-dimensional oil-price
sequential test experiment.

  X_t  = log(S_t / S_0)
  dX   = (mu + beta sigma^2) dt + sigma dW + rho (theta dZ_{lam t} + (1 - theta) dZb_{lam t})
  dsig = -lam sigma^2 dt + theta' dZ_{lam t} + (1 - theta') dZb_{lam t}

Prices come in as CSV with header "date,close" (ISO dates).

Usage:
  from market import load_prices, fit_parameters, run_oil_experiment
  fit = fit_parameters(load_prices("data/bakken.csv"))
  report = run_oil_experiment(fit, a=19.0, alpha0=0.9, l=-0.03)
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import stats

from decision import default_dt_1d, default_horizon_1d, simulate_exits_1d
from errors import LevySprtError, LoadError, ParameterError
from levy_sim import (DEFAULT_SEED, JumpMeasureSpec, euler_grid, jump_epochs, make_rng,
                      simulate_levy)
from likelihood import JumpTestParams, coefficients_record, jump_llr_characteristics, jump_llr_coefficients
from quadrature import QuadratureSpec
from supersub import ERROR_WIRING, envelope_params_1d, rectangle_from_envelopes

log = logging.getLogger(__name__)

# -----------------------
# CONFIG
# -----------------------
DIFFERENCES = "differences"
LOG_RETURNS = "log_returns"
MIN_RETURNS = 30
N_RUNS = 30
BAND_LEVEL = 0.99
JUMP_THRESHOLD = 3.0   # moves beyond this many sigma count toward the heuristic a
REFERENCE_TOL = 5e-3   # |r - published r| accepted as a reproduction
PRICE_FORMAT = "%.17g"  # enough digits to reload every float64 exactly
# values reported for the two Bakken FOB windows
PAPER_DATASETS = {
    1: {"mu": 0.0238, "sigma": 11.419, "a": 19.00, "alpha0": 0.9, "l": -0.03,
        "r_candidates": (0.3769, 0.2569), "right_exits": 6},
    2: {"mu": -0.0278, "sigma": 23.053, "a": 30.43, "alpha0": 0.9, "l": -0.1,
        "r_candidates": (0.1144, 0.1017), "right_exits": 12},
}
# -----------------------


# -----------------------
# BN-S simulation
# -----------------------
@dataclass(frozen=True)
class BnsParams:
    mu: float
    beta: float
    rho: float
    lam: float
    theta: float
    theta_prime: float
    sigma0_sq: float
    z_spec: JumpMeasureSpec
    zb_spec: JumpMeasureSpec
    s0: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"lambda must be > 0, got {self.lam}")
        if self.rho > 0:
            raise ParameterError(f"rho must be <= 0, got {self.rho}")
        for name in ("theta", "theta_prime"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")
        if not self.sigma0_sq > 0:
            raise ParameterError(f"sigma0_sq must be > 0, got {self.sigma0_sq}")
        if not self.s0 > 0:
            raise ParameterError(f"s0 must be > 0, got {self.s0}")
        if self.zb_spec.intensity <= self.z_spec.intensity and not self.zb_spec.is_zero:
            raise ParameterError(
                f"Zb intensity {self.zb_spec.intensity} must exceed Z intensity {self.z_spec.intensity}")

    def mixed_jump_mean(self) -> float:
        """theta' kappa_Z + (1 - theta') kappa_Zb with kappa the mean jump per unit clock."""
        return (self.theta_prime * self.z_spec.moment(1)
                + (1.0 - self.theta_prime) * self.zb_spec.moment(1))

    def expected_variance(self, t: float) -> float:
        decay = math.exp(-self.lam * t)
        return self.sigma0_sq * decay + self.mixed_jump_mean() * (1.0 - decay)


@dataclass(frozen=True)
class BnsPath:
    times: np.ndarray
    price: np.ndarray
    log_price: np.ndarray
    variance: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"time": self.times, "price": self.price,
                             "log_price": self.log_price, "variance": self.variance})


def _subordinator(spec: JumpMeasureSpec, lam: float, horizon: float, rng: np.random.Generator):
    """Epochs and sizes of Z_{lam t} on (0, horizon)."""
    if spec.is_zero:
        return np.empty(0), np.empty(0)
    epochs = jump_epochs(lam * spec.total_mass(), horizon, rng)
    return epochs, spec.sample(rng, epochs.size)


def _on_grid(times: np.ndarray, epochs: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    out = np.zeros(times.size)
    np.add.at(out, np.searchsorted(times, epochs), sizes)
    return out


def _integrate(params: BnsParams, times: np.ndarray, x_jumps: np.ndarray, v_jumps: np.ndarray,
               z: np.ndarray) -> BnsPath:
    n = times.size
    x = np.zeros(n)
    v = np.empty(n)
    v[0] = params.sigma0_sq
    steps = np.diff(times)
    for k in range(n - 1):
        dt = steps[k]
        x[k + 1] = (x[k] + (params.mu + params.beta * v[k]) * dt
                    + math.sqrt(v[k] * dt) * z[k] + params.rho * x_jumps[k + 1])
        v[k + 1] = v[k] * math.exp(-params.lam * dt) + v_jumps[k + 1]
    return BnsPath(times=times, price=params.s0 * np.exp(x), log_price=x, variance=v)


def simulate_bns(params: BnsParams, horizon: float, dt: float, seed: int = DEFAULT_SEED,
                 path_index: int = 0) -> BnsPath:
    """
    Euler scheme for X with exact exponential decay of sigma^2 between jumps.
    Jump epochs of each subordinator with a nonzero weight are merged into the grid;
    W, Z and Zb draw from their own streams.
    """
    if not (dt > 0 and horizon >= dt):
        raise ParameterError(f"need dt > 0 and horizon >= dt, got dt={dt} horizon={horizon}")
    use_z = params.theta > 0 or params.theta_prime > 0
    use_zb = params.theta < 1 or params.theta_prime < 1
    ez, sz = _subordinator(params.z_spec, params.lam, horizon, make_rng(seed, path_index, 1)) \
        if use_z else (np.empty(0), np.empty(0))
    ezb, szb = _subordinator(params.zb_spec, params.lam, horizon, make_rng(seed, path_index, 2)) \
        if use_zb else (np.empty(0), np.empty(0))
    times = np.unique(np.concatenate([euler_grid(horizon, dt), ez, ezb]))
    jz, jzb = _on_grid(times, ez, sz), _on_grid(times, ezb, szb)
    z = make_rng(seed, path_index, 0).standard_normal(times.size - 1)
    x_jumps = params.theta * jz + (1.0 - params.theta) * jzb
    v_jumps = params.theta_prime * jz + (1.0 - params.theta_prime) * jzb
    return _integrate(params, times, x_jumps, v_jumps, z)


def simulate_bns_classical(params: BnsParams, horizon: float, dt: float, seed: int = DEFAULT_SEED,
                           path_index: int = 0) -> BnsPath:
    """Single-subordinator BN-S path (theta and Zb ignored)."""
    if not (dt > 0 and horizon >= dt):
        raise ParameterError(f"need dt > 0 and horizon >= dt, got dt={dt} horizon={horizon}")
    ez, sz = _subordinator(params.z_spec, params.lam, horizon, make_rng(seed, path_index, 1))
    times = np.unique(np.concatenate([euler_grid(horizon, dt), ez]))
    jz = _on_grid(times, ez, sz)
    z = make_rng(seed, path_index, 0).standard_normal(times.size - 1)
    return _integrate(params, times, jz, jz, z)


# -----------------------
# price data
# -----------------------
@dataclass(frozen=True)
class PriceSeries:
    dates: pd.DatetimeIndex
    close: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.close):
            raise ParameterError("dates and prices must be aligned")
        if np.any(self.close <= 0):
            raise ParameterError("prices must be > 0")
        if self.dates.has_duplicates or not self.dates.is_monotonic_increasing:
            raise ParameterError("dates must be strictly increasing")

    @property
    def log_returns(self) -> np.ndarray:
        return np.diff(np.log(self.close))

    @property
    def differences(self) -> np.ndarray:
        return np.diff(self.close)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": self.dates.strftime("%Y-%m-%d"), "close": self.close})


def load_prices(path) -> PriceSeries:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"price file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise LoadError(f"cannot parse {path}: {exc}") from exc
    cols = [c.strip().lower() for c in raw.columns]
    if cols != ["date", "close"]:
        raise LoadError(f"expected header 'date,close', got {','.join(raw.columns)}", row=1)
    dates, prices, seen = [], [], {}
    for pos, (d, c) in enumerate(raw.itertuples(index=False, name=None)):
        row = pos + 2  # header is row 1
        try:
            date = pd.to_datetime(d.strip(), format="%Y-%m-%d")
        except (ValueError, TypeError) as exc:
            raise LoadError(f"malformed date {d!r}", row=row) from exc
        try:
            price = float(c)
        except (ValueError, TypeError) as exc:
            raise LoadError(f"malformed price {c!r}", row=row) from exc
        if not (math.isfinite(price) and price > 0):
            raise LoadError(f"price must be positive, got {c!r}", row=row)
        if date in seen:
            raise LoadError(f"duplicate date {d} (first at row {seen[date]})", row=row)
        seen[date] = row
        dates.append(date)
        prices.append(price)
    if len(prices) < 2:
        raise LoadError(f"need at least two prices, got {len(prices)}")
    frame = pd.DataFrame({"date": dates, "close": prices}).sort_values("date", kind="mergesort")
    return PriceSeries(dates=pd.DatetimeIndex(frame["date"]), close=frame["close"].to_numpy())


def save_prices(series: PriceSeries, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    series.to_frame().to_csv(path, index=False, float_format=PRICE_FORMAT)
    return path


# -----------------------
# fitting
# -----------------------
@dataclass(frozen=True)
class FitResult:
    mu_hat: float
    sigma_hat: float
    n_returns: int
    on: str = DIFFERENCES
    degenerate: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


def fit_parameters(series: PriceSeries, on: str = DIFFERENCES, min_returns: int = MIN_RETURNS) -> FitResult:
    """Sample mean and standard deviation (ddof 1) of daily price differences or log-returns."""
    if on == DIFFERENCES:
        moves = series.differences
    elif on == LOG_RETURNS:
        moves = series.log_returns
    else:
        raise ParameterError(f"fit must run on {DIFFERENCES!r} or {LOG_RETURNS!r}, got {on!r}")
    if moves.size < min_returns:
        raise ParameterError(f"need at least {min_returns} returns, got {moves.size}")
    mu, sigma = float(moves.mean()), float(moves.std(ddof=1))
    degenerate = sigma <= 1e-12 * max(1.0, abs(mu))
    if degenerate:
        log.warning("price series has no dispersion: sigma_hat=%g", sigma)
    return FitResult(mu_hat=mu, sigma_hat=sigma, n_returns=int(moves.size), on=on, degenerate=degenerate)


def estimate_jump_statistic(series: PriceSeries, fit: FitResult, threshold: float = JUMP_THRESHOLD) -> float:
    """Mean absolute move among moves beyond threshold sigma, in units of sigma_hat (0 if none)."""
    moves = series.differences if fit.on == DIFFERENCES else series.log_returns
    if fit.degenerate:
        return 0.0
    big = np.abs(moves - fit.mu_hat) > threshold * fit.sigma_hat
    if not big.any():
        return 0.0
    return float(np.abs(moves[big]).mean() / fit.sigma_hat)


def paper_dataset(n: int) -> Dict:
    if n not in PAPER_DATASETS:
        raise ParameterError(f"dataset must be one of {sorted(PAPER_DATASETS)}, got {n}")
    return dict(PAPER_DATASETS[n])


# -----------------------
# oil experiment
# -----------------------
def binomial_band(n: int, rate: float, level: float = BAND_LEVEL) -> tuple:
    tail = (1.0 - level) / 2.0
    return int(stats.binom.ppf(tail, n, rate)), int(stats.binom.ppf(1.0 - tail, n, rate))


@dataclass
class OilReport:
    fit: Dict
    a: float
    alpha0: float
    l: float
    wiring: str
    coefficients: Dict = field(default_factory=dict)
    envelope: Dict = field(default_factory=dict)
    r_candidates: List[float] = field(default_factory=list)
    r: Optional[float] = None
    exits: Dict[str, int] = field(default_factory=lambda: {"right": 0, "left": 0, "none": 0})
    outcomes: List[Dict] = field(default_factory=list)
    band: Dict = field(default_factory=dict)
    dt: Optional[float] = None
    horizon: Optional[float] = None
    seed: int = DEFAULT_SEED
    audit: List[Dict] = field(default_factory=list)
    reference_r: Optional[float] = None
    r_discrepancy: Optional[float] = None   # r - reference_r
    r_ratio: Optional[float] = None         # reference_r / r
    reference_met: Optional[bool] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def _compare_reference(report: OilReport, reference_r: float) -> None:
    report.reference_r = reference_r
    if report.r is None:
        report.reference_met = False
        return
    report.r_discrepancy = report.r - reference_r
    report.r_ratio = reference_r / report.r if report.r > 0 else math.inf
    report.reference_met = abs(report.r_discrepancy) <= REFERENCE_TOL
    if not report.reference_met:
        log.warning("r=%.6g differs from the published %.6g by %.4g (ratio %.4g)",
                    report.r, reference_r, report.r_discrepancy, report.r_ratio)


def run_oil_experiment(fit: FitResult, a: float, alpha0: float, l: float, n_runs: int = N_RUNS,
                       horizon: float = None, seed: int = DEFAULT_SEED, world: int = 0,
                       wiring: str = ERROR_WIRING, measure: JumpMeasureSpec = None,
                       dt: float = None, reference_exits: int = None, reference_r: float = None,
                       quad: QuadratureSpec = None) -> OilReport:
    """
    One-coordinate jump test on fitted parameters: r from the envelope
    candidates (max rule), then n_runs LLR paths run to exit or horizon.
    With reference_r the gap to the published threshold is recorded on the report.
    """
    if fit.sigma_hat <= 0:
        raise ParameterError(f"fit has sigma_hat={fit.sigma_hat}; cannot build a jump test")
    if not l < 0:
        raise ParameterError(f"l must be < 0, got {l}")
    report = OilReport(fit=fit.to_dict(), a=a, alpha0=alpha0, l=l, wiring=wiring, seed=seed)
    coeffs = jump_llr_coefficients(JumpTestParams.single(a, fit.sigma_hat, measure), 0, world, quad)
    report.coefficients = coefficients_record(coeffs)
    chars = jump_llr_characteristics(coeffs, world)

    try:
        env = envelope_params_1d(coeffs, (l, 1.0), world=str(world), quad=quad)
        report.envelope = env.to_dict()
        cand = rectangle_from_envelopes(alpha0, env, l, wiring=wiring)
        report.r_candidates = [cand.upper[0], cand.lower[0]]
        report.r = cand.r[0]
        report.audit.extend(cand.audit)
    except LevySprtError as exc:
        log.warning("no threshold candidate: %s", exc)
        report.audit.append({"stage": "rectangle_from_envelopes", "error": str(exc)})

    if report.r is None:
        report.exits = {"right": 0, "left": 0, "none": n_runs}
        report.outcomes = [{"run": k, "side": "none", "tau": None} for k in range(n_runs)]
    else:
        report.dt = dt or default_dt_1d(l, report.r, chars)
        report.horizon = horizon or default_horizon_1d(l, report.r, chars)
        if not math.isfinite(report.horizon):
            report.horizon = 1000.0
        exits = simulate_exits_1d(chars, l, report.r, n_runs, report.dt, report.horizon,
                                  seed=seed, stream=(world,), quad=quad)
        names = {1: "right", -1: "left", 0: "none"}
        report.exits = {v: int(np.sum(exits.side == k)) for k, v in names.items()}
        report.outcomes = [{"run": k, "side": names[int(s)], "tau": float(t) if s else None}
                           for k, (s, t) in enumerate(zip(exits.side, exits.tau))]
        if report.exits["none"]:
            log.warning("%d of %d runs censored at horizon %.4g", report.exits["none"], n_runs, report.horizon)

    if reference_exits is not None:
        # reference counts come from N_RUNS runs
        lo, hi = binomial_band(n_runs, min(reference_exits / N_RUNS, 1.0))
        report.band = {"reference": reference_exits, "low": lo, "high": hi,
                       "inside": lo <= report.exits["right"] <= hi}
        if not report.band["inside"]:
            log.warning("%d right exits outside the reference band [%d, %d]", report.exits["right"], lo, hi)
    if reference_r is not None:
        _compare_reference(report, float(reference_r))
    return report


def simulate_llr_runs(fit: FitResult, a: float, l: float, r: float, n_runs: int, dt: float,
                      horizon: float, seed: int = DEFAULT_SEED, world: int = 0,
                      measure: JumpMeasureSpec = None, quad: QuadratureSpec = None) -> pd.DataFrame:
    """Full LLR paths of the oil experiment, stacked with a run column (plot/audit output)."""
    coeffs = jump_llr_coefficients(JumpTestParams.single(a, fit.sigma_hat, measure), 0, world, quad)
    chars = jump_llr_characteristics(coeffs, world)
    frames = []
    for k in range(n_runs):
        path = simulate_levy(chars, horizon, dt, seed=seed, path_index=k, quad=quad)
        frame = path.to_frame()
        outside = (frame["value"] < l) | (frame["value"] > r)
        if outside.any():
            frame = frame.iloc[: int(np.argmax(outside.to_numpy())) + 1]
        frames.append(frame.assign(run=k))
    return pd.concat(frames, ignore_index=True)
