"""
decision.py
Sequential rectangle decision rule and its Monte Carlo operating characteristics.

Each coordinate k stops at the first grid point where its LLR leaves
[l_k, r_k]; a right exit asserts "signal present" (digit 1), a left exit
digit 0. The two digits compose the world label, e.g. "01". The combined
stop is tau = max(tau_1, tau_2).

Monte Carlo runs use simulate_exits_1d, a batched early-stopping engine:
paths advance in chunks of steps, exited paths drop out, and each batch owns
the private stream (seed, *stream, batch) so results do not depend on n_jobs.
Jumps land at exact epochs inside their step and the post-jump value is
checked against the walls there; the diffusion is checked on the grid.

Usage:
  from decision import monte_carlo_operating_stats
  stats = monte_carlo_operating_stats("00", "drift", DriftTestParams.symmetric(), rect, n_paths=20000)
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from errors import DiagnosticError, ParameterError
from levy_sim import DEFAULT_SEED, LevyCharacteristics, SamplePath, SamplePath2D
from likelihood import (STATEMENT, WORLDS, DriftTestParams, JumpTestParams, drift_llr_characteristics,
                        jump_llr_characteristics, jump_llr_coefficients, parse_world)
from quadrature import QuadratureSpec
from thresholds import PRINTED, ErrorSpec, Rectangle, solve_rectangle

log = logging.getLogger(__name__)

# -----------------------
# CONFIG
# -----------------------
DT_FACTOR = 1e-4
DT_MAX = 0.05
HORIZON_FACTOR = 50.0
HORIZON_MAX = 1000.0
BATCH_SIZE = 2000
CHUNK_STEPS = 512
MIN_PATHS = 100
MAX_NO_DECISION = 0.5
NO_DECISION = "none"
# -----------------------


@dataclass(frozen=True)
class DecisionOutcome:
    tau_1: float
    tau_2: float
    exit_side: Tuple[Optional[str], Optional[str]]

    @property
    def decided(self) -> bool:
        return None not in self.exit_side

    @property
    def tau(self) -> float:
        return max(self.tau_1, self.tau_2)

    @property
    def delta(self) -> str:
        if not self.decided:
            return NO_DECISION
        return "".join("1" if side == "right" else "0" for side in self.exit_side)


@dataclass(frozen=True)
class ExitSample:
    """Per-path exit time (inf if none) and side (+1 right, -1 left, 0 none)."""
    tau: np.ndarray
    side: np.ndarray

    @property
    def n(self) -> int:
        return int(self.side.size)

    def fraction(self, side: int) -> float:
        return float(np.mean(self.side == side))


@dataclass(frozen=True)
class OperatingStats:
    world: str
    test: str
    n_paths: int
    alpha_hat: float
    alpha_se: float
    label_rates: Dict[str, float]
    no_decision: float
    mean_tau: float
    mean_tau_se: float
    mean_tau1: float
    mean_tau1_se: float
    gap: float
    gap_se: float
    tau_correlation: float
    dt: float
    horizon: float

    def to_dict(self) -> Dict:
        return asdict(self)


# -----------------------
# single paths
# -----------------------
def first_exit(path: SamplePath, l: float, r: float) -> Tuple[float, Optional[str]]:
    """First grid time strictly outside [l, r] and the exit side; (inf, None) if none."""
    outside = (path.values < l) | (path.values > r)
    hits = np.flatnonzero(outside)
    if hits.size == 0:
        return math.inf, None
    idx = int(hits[0])
    return float(path.times[idx]), ("right" if path.values[idx] > r else "left")


def run_decision(llr2d: SamplePath2D, rect: Rectangle) -> DecisionOutcome:
    for k, path in enumerate((llr2d.first, llr2d.second)):
        l, r = rect.bounds(k)
        if not l < path.values[0] < r:
            raise ParameterError(f"coordinate {k} starts at {path.values[0]}, outside ({l}, {r})")
    t1, s1 = first_exit(llr2d.first, rect.l1, rect.r1)
    t2, s2 = first_exit(llr2d.second, rect.l2, rect.r2)
    return DecisionOutcome(tau_1=t1, tau_2=t2, exit_side=(s1, s2))


def exit_probability_oracle_1d(drift: float, variance: float, l: float, r: float) -> float:
    """P(hit r before l) from 0 for drifted Brownian motion: (s(0)-s(l)) / (s(r)-s(l)), s(x)=e^{-2 drift x/variance}."""
    if not l < 0 < r:
        raise ParameterError(f"need l < 0 < r, got l={l} r={r}")
    if variance < 0:
        raise ParameterError(f"variance must be >= 0, got {variance}")
    if variance == 0:
        if drift == 0:
            raise ParameterError("zero drift and zero variance never exit")
        return 1.0 if drift > 0 else 0.0
    theta = 2.0 * drift / variance
    if theta == 0:
        return -l / (r - l)
    # s(x) - s(0) = expm1(-theta x)
    num = -math.expm1(-theta * l)
    den = math.expm1(-theta * r) - math.expm1(-theta * l)
    return num / den


# -----------------------
# batched exit engine
# -----------------------
def _split_cells(counts: np.ndarray, mu: float, sd: float, chars: LevyCharacteristics,
                 rng: np.random.Generator):
    """
    Exact jump epochs inside the steps that hold jumps. Returns the flat ids of
    those steps, each jump's owning step (index into the ids), its fraction of
    the step, the value right after it relative to the step start, and the
    full increment of every such step.
    """
    per = counts.ravel()
    cells = np.flatnonzero(per)
    c = per[cells]
    owner = np.repeat(np.arange(cells.size), c)
    u = rng.random(owner.size)
    order = np.lexsort((u, owner))
    u = u[order]
    first = np.concatenate([[0], np.cumsum(c)[:-1]])
    prev = np.empty_like(u)
    prev[1:] = u[:-1]
    prev[first] = 0.0
    frac = u - prev
    moves = (mu * frac + sd * np.sqrt(frac) * rng.standard_normal(owner.size)
             + chars.jump_sign * chars.jumps.sample(rng, owner.size))
    running = np.cumsum(moves)
    within = running - np.repeat(running[first] - moves[first], c)
    rest = 1.0 - u[first + c - 1]
    total = within[first + c - 1] + mu * rest + sd * np.sqrt(rest) * rng.standard_normal(cells.size)
    return cells, owner, u, within, total


def _exit_batch(chars: LevyCharacteristics, l: float, r: float, n: int, dt: float,
                horizon: float, keys: Tuple[int, ...], quad: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence(list(keys)))
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    x = np.zeros(n)
    tau = np.full(n, np.inf)
    side = np.zeros(n, dtype=np.int8)
    alive = np.arange(n)
    mu = chars.drift * dt
    sd = math.sqrt(chars.diffusion_var * dt)
    lam = chars.jump_mass(quad) * dt if chars.has_jumps else 0.0
    step = 0
    while alive.size and step < n_steps:
        m = min(CHUNK_STEPS, n_steps - step)
        inc = mu + sd * rng.standard_normal((alive.size, m))
        jumps = None
        if lam > 0:
            counts = rng.poisson(lam, size=inc.shape)
            if counts.any():
                jumps = _split_cells(counts, mu, sd, chars, rng)
                inc.ravel()[jumps[0]] = jumps[4]
        paths = x[alive, None] + np.cumsum(inc, axis=1)
        outside = (paths < l) | (paths > r)
        hit = outside.any(axis=1)
        first = outside.argmax(axis=1)
        when = np.where(hit, (step + first + 1) * dt, np.inf)
        where = np.where(hit, np.where(paths[np.arange(alive.size), first] > r, 1, -1), 0)
        if jumps is not None:
            # post-jump values at the exact epochs
            cells, owner, u, within, _ = jumps
            start = (paths.ravel()[cells] - inc.ravel()[cells])[owner]
            value = start + within
            out = (value < l) | (value > r)
            row = cells[owner] // m
            col = cells[owner] % m
            rows, pick = np.unique(row[out], return_index=True)
            k = np.flatnonzero(out)[pick]
            t_jump = (step + col[k] + u[k]) * dt
            earlier = t_jump < when[rows]
            rows, k, t_jump = rows[earlier], k[earlier], t_jump[earlier]
            when[rows] = t_jump
            where[rows] = np.where(value[k] > r, 1, -1)
            hit[rows] = True
        done = alive[hit]
        tau[done] = np.minimum(when[hit], horizon)
        side[done] = where[hit]
        x[alive] = paths[:, -1]
        alive = alive[~hit]
        step += m
    return tau, side


def simulate_exits_1d(chars: LevyCharacteristics, l: float, r: float, n_paths: int, dt: float,
                      horizon: float, seed: int = DEFAULT_SEED, stream: Sequence[int] = (),
                      n_jobs: int = 1, quad: QuadratureSpec = None) -> ExitSample:
    if not l < 0 < r:
        raise ParameterError(f"need l < 0 < r, got l={l} r={r}")
    if not (dt > 0 and horizon >= dt):
        raise ParameterError(f"need dt > 0 and horizon >= dt, got dt={dt} horizon={horizon}")
    if n_paths < 1:
        raise ParameterError(f"n_paths must be >= 1, got {n_paths}")
    quad = quad or QuadratureSpec()
    sizes = [min(BATCH_SIZE, n_paths - start) for start in range(0, n_paths, BATCH_SIZE)]
    keys = [(int(seed), *[int(s) for s in stream], b) for b in range(len(sizes))]
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_exit_batch)(chars, l, r, n, dt, horizon, key, quad) for n, key in zip(sizes, keys))
    return ExitSample(tau=np.concatenate([p[0] for p in parts]),
                      side=np.concatenate([p[1] for p in parts]))


# -----------------------
# Monte Carlo driver
# -----------------------
def exit_time_scale(l: float, r: float, chars: LevyCharacteristics) -> float:
    """Time scale of an exit from (l, r): width over drift speed or width^2 over variance."""
    width = r - l
    speed = max(abs(chars.mean_slope()) / width, chars.diffusion_var / (width * width))
    return 1.0 / speed if speed > 0 else math.inf


def default_dt(rect: Rectangle, variances: Sequence[float], factor: float = DT_FACTOR,
               jump_rates: Sequence[float] = ()) -> float:
    """factor * min_k (r_k - l_k)^2 / max_k variance_k, capped at DT_MAX and at 1% jump odds per step."""
    width = min(rect.r1 - rect.l1, rect.r2 - rect.l2)
    return _dt(width, variances, factor, jump_rates)


def default_dt_1d(l: float, r: float, chars: LevyCharacteristics, factor: float = DT_FACTOR) -> float:
    return _dt(r - l, [chars.diffusion_var], factor, [chars.jump_mass()])


def _dt(width: float, variances: Sequence[float], factor: float, jump_rates: Sequence[float]) -> float:
    top = max(variances)
    dt = DT_MAX if top <= 0 else min(factor * width * width / top, DT_MAX)
    rate = max(jump_rates, default=0.0)
    if rate > 0:
        dt = min(dt, 0.01 / rate)
    return dt


def default_horizon(rect: Rectangle, chars: Sequence[LevyCharacteristics]) -> float:
    """A generous multiple of the slowest coordinate's exit time scale."""
    slowest = max(exit_time_scale(*rect.bounds(k), c) for k, c in enumerate(chars))
    return min(HORIZON_FACTOR * slowest, HORIZON_MAX)


def default_horizon_1d(l: float, r: float, chars: LevyCharacteristics) -> float:
    return min(HORIZON_FACTOR * exit_time_scale(l, r, chars), HORIZON_MAX)


def llr_characteristics_pair(world: str, test: str, params, quad: QuadratureSpec = None
                             ) -> Tuple[LevyCharacteristics, LevyCharacteristics]:
    """LLR characteristics of both coordinates under world ij (coordinate 0 uses i)."""
    idx = parse_world(world)
    if test == "drift":
        if not isinstance(params, DriftTestParams):
            raise ParameterError("drift test needs DriftTestParams")
        return tuple(drift_llr_characteristics(params, k, idx[k], STATEMENT) for k in (0, 1))
    if test == "jump":
        if not isinstance(params, JumpTestParams):
            raise ParameterError("jump test needs JumpTestParams")
        return tuple(jump_llr_characteristics(jump_llr_coefficients(params, k, idx[k], quad), idx[k])
                     for k in (0, 1))
    raise ParameterError(f"test must be 'drift' or 'jump', got {test!r}")


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def monte_carlo_operating_stats(world: str, test: str, params, rect: Rectangle, n_paths: int,
                                dt: float = None, horizon: float = None, seed: int = DEFAULT_SEED,
                                n_jobs: int = 1, max_no_decision: float = MAX_NO_DECISION,
                                quad: QuadratureSpec = None) -> OperatingStats:
    if n_paths < MIN_PATHS:
        raise ParameterError(f"n_paths must be >= {MIN_PATHS}, got {n_paths}")
    chars = llr_characteristics_pair(world, test, params, quad)
    dt = dt or default_dt(rect, [c.diffusion_var for c in chars],
                          jump_rates=[c.jump_mass(quad) for c in chars])
    horizon = horizon or default_horizon(rect, chars)
    log.info("monte carlo world=%s test=%s n=%d dt=%.3g horizon=%.4g", world, test, n_paths, dt, horizon)

    exits = [simulate_exits_1d(chars[k], *rect.bounds(k), n_paths, dt, horizon, seed=seed,
                               stream=(WORLDS.index(world), k), n_jobs=n_jobs, quad=quad)
             for k in (0, 1)]
    decided = (exits[0].side != 0) & (exits[1].side != 0)
    no_decision = 1.0 - float(decided.mean())
    if no_decision > max_no_decision:
        raise DiagnosticError(
            f"{no_decision:.1%} of paths undecided by horizon {horizon:.4g}; use a longer horizon")
    if no_decision > 0:
        log.warning("%d of %d paths undecided by horizon %.4g", int((~decided).sum()), n_paths, horizon)

    digits = [np.where(e.side == 1, "1", "0") for e in exits]
    labels = np.char.add(digits[0], digits[1])
    labels = np.where(decided, labels, NO_DECISION)
    rates = {w: float(np.mean(labels == w)) for w in WORLDS + (NO_DECISION,)}
    p = float(np.mean(decided & (labels != world)))
    tau1 = exits[0].tau[decided]
    tau = np.maximum(exits[0].tau, exits[1].tau)[decided]
    mean_tau, mean_tau_se = _mean_se(tau)
    mean_tau1, mean_tau1_se = _mean_se(tau1)
    gap, gap_se = _mean_se(tau - tau1)
    corr = math.nan
    if decided.sum() > 2:
        t1, t2 = exits[0].tau[decided], exits[1].tau[decided]
        if t1.std() > 0 and t2.std() > 0:
            corr = float(np.corrcoef(t1, t2)[0, 1])
    return OperatingStats(world=world, test=test, n_paths=n_paths, alpha_hat=p,
                          alpha_se=math.sqrt(p * (1.0 - p) / n_paths), label_rates=rates,
                          no_decision=no_decision, mean_tau=mean_tau, mean_tau_se=mean_tau_se,
                          mean_tau1=mean_tau1, mean_tau1_se=mean_tau1_se, gap=gap, gap_se=gap_se,
                          tau_correlation=corr, dt=dt, horizon=horizon)


def gap_table(levels: Iterable[float], n_paths: int, params: DriftTestParams = None,
              variant: str = PRINTED, dt: float = 2e-3, horizon: float = 60.0,
              seed: int = DEFAULT_SEED, n_jobs: int = 1) -> pd.DataFrame:
    """E(tau_1 v tau_2) - E(tau_1) under world 00 across symmetric alpha levels."""
    params = params or DriftTestParams.symmetric()
    rows = []
    for alpha in levels:
        rect = solve_rectangle(ErrorSpec.symmetric(alpha), variant=variant)
        stats = monte_carlo_operating_stats("00", "drift", params, rect, n_paths, dt=dt,
                                            horizon=horizon, seed=seed, n_jobs=n_jobs)
        rows.append({"alpha": alpha, **rect.to_dict(), "gap": stats.gap, "gap_se": stats.gap_se,
                     "mean_tau": stats.mean_tau, "mean_tau1": stats.mean_tau1,
                     "alpha_hat": stats.alpha_hat, "alpha_se": stats.alpha_se,
                     "no_decision": stats.no_decision})
    return pd.DataFrame(rows)
