import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate, stats

from services.errors import DomainError, FitError
from services.mimo_channel import (
    RngSpec,
    mutual_info_batch,
    sample_blocks,
    snr_db_to_linear,
)

logger = logging.getLogger(__name__)

# Configuration
CONFIDENCE = 0.95
BATCH_TRIALS = 50_000      # fixed decomposition, independent of worker count
MIN_FIT_HITS = 20          # rungs with fewer raw outage hits are not regressed
MAX_REL_CI_WIDTH = 1.0     # (ci_hi - ci_lo) / p_hat above this is not regressed
CSV_COLUMNS = ["snr_db", "trials", "weighted_hits", "p_hat", "ci_lo", "ci_hi", "tilt_theta"]

# event(H, rho) -> bool array over the leading trial axis of H (trials, n_blocks, nr, nt)
OutageEvent = Callable[[np.ndarray, float], np.ndarray]


def _z() -> float:
    return float(stats.norm.ppf(1.0 - (1.0 - CONFIDENCE) / 2.0))


@dataclass(frozen=True)
class SnrLadder:
    points_db: Tuple[float, ...]

    def __post_init__(self):
        if not self.points_db:
            raise DomainError("SNR ladder must not be empty")
        if not all(math.isfinite(p) for p in self.points_db):
            raise DomainError("SNR ladder points must be finite")
        if any(b <= a for a, b in zip(self.points_db, self.points_db[1:])):
            raise DomainError("SNR ladder must be strictly increasing")

    @classmethod
    def from_range(cls, start_db: float, stop_db: float, step_db: float) -> "SnrLadder":
        if step_db <= 0:
            raise DomainError(f"SNR step must be > 0, got {step_db}")
        n = int(math.floor((stop_db - start_db) / step_db + 1e-9)) + 1
        if n < 1:
            raise DomainError(f"empty SNR range [{start_db}, {stop_db}]")
        return cls(tuple(round(start_db + i * step_db, 10) for i in range(n)))

    @property
    def rhos(self) -> List[float]:
        return [snr_db_to_linear(p) for p in self.points_db]

    def __len__(self):
        return len(self.points_db)


@dataclass(frozen=True)
class TiltSpec:
    """Per-entry sampling variance becomes rho^-theta; theta = 0 is plain sampling"""
    theta: float = 0.0

    def __post_init__(self):
        if self.theta < 0 or not math.isfinite(self.theta):
            raise DomainError(f"tilt theta must be a finite value >= 0, got {self.theta}")

    def variance(self, rho: float) -> float:
        return rho ** (-self.theta)


def default_tilt(r: float, nr: int = 1, nt: int = 1, n_blocks: int = 1) -> TiltSpec:
    """
    theta = 1 - r (clipped to [0, 1]) centres single-block SISO sampling on the
    outage boundary |h|^2 ~ rho^-(1-r). Anything else samples untilted:
    multi-antenna outage sets reach entry powers of order rho, where the
    likelihood ratio has no finite second moment once rho^-theta < 1/2.
    """
    if nr == 1 and nt == 1 and n_blocks == 1:
        return TiltSpec(min(max(1.0 - r, 0.0), 1.0))
    return TiltSpec(0.0)


@dataclass
class OutageEstimate:
    trials: int
    hits: int
    weighted_hits: float
    weight_sq_sum: float
    tilt_theta: float = 0.0
    snr_db: Optional[float] = None
    p_hat: float = field(init=False)
    ci_lo: float = field(init=False)
    ci_hi: float = field(init=False)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if self.hits > 0 and self.weighted_hits == 0.0:
            msg = f"{self.hits} outage hits carry zero total weight (tilt too aggressive?)"
            if msg not in self.warnings:
                self.warnings.append(msg)
                logger.warning(msg)
        self._compute_interval()

    @property
    def tilted(self) -> bool:
        return self.tilt_theta > 0.0

    def _compute_interval(self):
        n = self.trials
        z = _z()
        if not self.tilted:
            # Wilson score interval on the integer hit count
            p = self.hits / n
            denom = 1.0 + z * z / n
            centre = (p + z * z / (2.0 * n)) / denom
            half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
            self.p_hat = p
            self.ci_lo = max(0.0, centre - half)
            self.ci_hi = min(1.0, centre + half)
            if p == 0.0:
                self.ci_lo = 0.0
            if p == 1.0:
                self.ci_hi = 1.0
            return
        mean = self.weighted_hits / n
        var = max(self.weight_sq_sum / n - mean * mean, 0.0)
        se = math.sqrt(var / n)
        self.p_hat = min(max(mean, 0.0), 1.0)
        self.ci_lo = min(max(mean - z * se, 0.0), self.p_hat)
        self.ci_hi = max(min(mean + z * se, 1.0), self.p_hat)

    @property
    def std_error(self) -> float:
        n = self.trials
        if not self.tilted:
            return math.sqrt(self.p_hat * (1.0 - self.p_hat) / n)
        mean = self.weighted_hits / n
        return math.sqrt(max(self.weight_sq_sum / n - mean * mean, 0.0) / n)

    @property
    def rel_ci_width(self) -> float:
        if self.p_hat <= 0.0:
            return math.inf
        return (self.ci_hi - self.ci_lo) / self.p_hat

    def merge(self, other: "OutageEstimate") -> "OutageEstimate":
        if self.tilt_theta != other.tilt_theta:
            raise DomainError("cannot merge estimates drawn with different tilts")
        return OutageEstimate(
            trials=self.trials + other.trials,
            hits=self.hits + other.hits,
            weighted_hits=self.weighted_hits + other.weighted_hits,
            weight_sq_sum=self.weight_sq_sum + other.weight_sq_sum,
            tilt_theta=self.tilt_theta,
            snr_db=self.snr_db if self.snr_db is not None else other.snr_db,
            warnings=list(dict.fromkeys(self.warnings + other.warnings)),
        )

    def to_row(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "trials": self.trials,
            "weighted_hits": self.weighted_hits,
            "p_hat": self.p_hat,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "tilt_theta": self.tilt_theta,
        }


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    points_used: int
    excluded: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.points_used < 2:
            raise FitError(f"a slope fit needs >= 2 points, got {self.points_used}")
        if not math.isfinite(self.slope):
            raise FitError("fitted slope is not finite")

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "points_used": self.points_used,
            "excluded": list(self.excluded),
        }


@dataclass
class LadderResult:
    ladder: SnrLadder
    estimates: List[OutageEstimate]
    fit: Optional[SlopeFit]
    fit_error: Optional[str] = None
    excluded_rungs: List[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "ladder_db": list(self.ladder.points_db),
            "slope": self.fit.slope if self.fit else None,
            "intercept": self.fit.intercept if self.fit else None,
            "r_squared": self.fit.r_squared if self.fit else None,
            "excluded_rungs_db": self.excluded_rungs,
            "fit_error": self.fit_error,
        }


def siso_outage_closed_form(rho: float, r: float) -> float:
    """Pr(log2(1 + rho |h|^2) <= r log2 rho) for |h|^2 ~ Exp(1)"""
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    if r < 0:
        raise DomainError(f"r must be >= 0, got {r}")
    threshold = (rho ** r - 1.0) / rho
    if threshold <= 0.0:
        return 0.0
    return min(max(-math.expm1(-threshold), 0.0), 1.0)


def interleave_siso_outage_quadrature(rho: float, r: float) -> float:
    """
    Two-block SISO interleaving outage probability by 2-D quadrature:
    Pr((1 + rho a)(1 + rho b) <= rho^(2r)) with a, b ~ Exp(1).
    """
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    budget = rho ** (2.0 * r)
    a_max = (budget - 1.0) / rho
    if a_max <= 0.0:
        return 0.0

    def b_max(a):
        return max((budget / (1.0 + rho * a) - 1.0) / rho, 0.0)

    value, _err = integrate.dblquad(
        lambda b, a: math.exp(-a - b), 0.0, a_max, 0.0, b_max,
        epsabs=1e-13, epsrel=1e-10,
    )
    return value


def single_link_outage_event(r: float) -> OutageEvent:
    """{log2 det(I + rho/nt H H^H) <= r log2 rho} on every block of the trial"""
    def event(H: np.ndarray, rho: float) -> np.ndarray:
        C = mutual_info_batch(H, rho)
        return np.all(C <= r * math.log2(rho), axis=1)
    return event


def fit_diversity(points: Sequence[Tuple[float, float]]) -> SlopeFit:
    """OLS of -log2 p_hat against log2 rho; the slope estimates the diversity order"""
    xs, ys, excluded = [], [], []
    for i, (rho, p) in enumerate(points):
        if not (0.0 < p < 1.0) or not rho > 0:
            logger.warning(f"Excluding fit point {i} (rho={rho}, p_hat={p}): p_hat must lie in (0, 1)")
            excluded.append(i)
            continue
        xs.append(math.log2(rho))
        ys.append(-math.log2(p))
    if len(xs) < 2:
        raise FitError(f"need at least 2 usable points, got {len(xs)}")
    res = stats.linregress(xs, ys)
    return SlopeFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue ** 2),
        points_used=len(xs),
        excluded=tuple(excluded),
    )


class OutageSimulator:
    """
    Runs an outage event over fixed-size trial batches. Batch b of a rung uses
    stream rng.child(b) and batches are reduced in index order, so results do
    not depend on the number of workers.
    """

    def __init__(self, workers: int = 1, batch_trials: int = BATCH_TRIALS):
        if workers < 1:
            raise DomainError(f"workers must be >= 1, got {workers}")
        if batch_trials < 1:
            raise DomainError(f"batch_trials must be >= 1, got {batch_trials}")
        self.workers = workers
        self.batch_trials = batch_trials

    def batch_sizes(self, trials: int) -> List[int]:
        full, rest = divmod(trials, self.batch_trials)
        return [self.batch_trials] * full + ([rest] if rest else [])

    def run_batch(self, event: OutageEvent, nr: int, nt: int, n_blocks: int, rho: float,
                  size: int, tilt: TiltSpec, rng: RngSpec) -> OutageEstimate:
        variance = tilt.variance(rho)
        H = sample_blocks(nr, nt, n_blocks, size, rng, variance=variance)
        hit = np.asarray(event(H, rho), dtype=bool)
        hits = int(np.count_nonzero(hit))
        if tilt.theta == 0.0:
            return OutageEstimate(size, hits, float(hits), float(hits), 0.0)
        # likelihood ratio of CN(0,1) against CN(0, variance), in the log domain
        n_entries = n_blocks * nr * nt
        power = np.sum(np.abs(H) ** 2, axis=(1, 2, 3))
        log_w = n_entries * math.log(variance) - power * (1.0 - 1.0 / variance)
        w = np.exp(log_w[hit])
        return OutageEstimate(size, hits, float(np.sum(w)), float(np.sum(w * w)), tilt.theta)

    def estimate(self, event: OutageEvent, nr: int, nt: int, n_blocks: int, rho: float,
                 trials: int, tilt: TiltSpec, rng: RngSpec) -> OutageEstimate:
        if trials < 1:
            raise DomainError(f"trials must be >= 1, got {trials}")
        sizes = self.batch_sizes(trials)

        def job(b):
            return self.run_batch(event, nr, nt, n_blocks, rho, sizes[b], tilt, rng.child(b))

        if self.workers == 1 or len(sizes) == 1:
            parts = [job(b) for b in range(len(sizes))]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(job, range(len(sizes))))
        total = parts[0]
        for part in parts[1:]:
            total = total.merge(part)
        return total


def estimate_outage(event: OutageEvent, nr: int, nt: int, n_blocks: int, rho: float,
                    trials: int, tilt: Optional[TiltSpec], rng: RngSpec,
                    simulator: Optional[OutageSimulator] = None) -> OutageEstimate:
    simulator = simulator or OutageSimulator()
    return simulator.estimate(event, nr, nt, n_blocks, rho, trials, tilt or TiltSpec(), rng)


def run_ladder(event: OutageEvent, ladder: SnrLadder, trials: Union[int, Sequence[int]],
               rng: RngSpec, nr: int = 1, nt: int = 1, n_blocks: int = 1,
               tilt: Union[None, TiltSpec, Sequence[TiltSpec]] = None,
               simulator: Optional[OutageSimulator] = None,
               max_rel_ci_width: float = MAX_REL_CI_WIDTH) -> LadderResult:
    """
    One estimate per rung (rung i uses rng.child(i)), then a slope fit over the
    rungs with at least MIN_FIT_HITS hits and a narrow enough interval.
    """
    simulator = simulator or OutageSimulator()
    n = len(ladder)
    trials_per_rung = [trials] * n if isinstance(trials, int) else list(trials)
    if isinstance(tilt, TiltSpec) or tilt is None:
        tilts = [tilt or TiltSpec()] * n
    else:
        tilts = list(tilt)
    if len(trials_per_rung) != n or len(tilts) != n:
        raise DomainError("trials and tilt schedules must match the ladder length")
    if n_blocks > 1 and any(t.theta > 0 for t in tilts):
        logger.warning("Tilting a multi-block event; weights may have heavy tails")

    estimates = []
    for i, (snr_db, rho) in enumerate(zip(ladder.points_db, ladder.rhos)):
        est = simulator.estimate(event, nr, nt, n_blocks, rho, trials_per_rung[i],
                                 tilts[i], rng.child(i))
        est.snr_db = snr_db
        logger.info(f"Rung {snr_db:g} dB: p_hat={est.p_hat:.4g} "
                    f"[{est.ci_lo:.4g}, {est.ci_hi:.4g}] from {est.trials} trials")
        estimates.append(est)

    return fit_ladder(ladder, estimates, max_rel_ci_width)


def fit_ladder(ladder: SnrLadder, estimates: List[OutageEstimate],
                max_rel_ci_width: float = MAX_REL_CI_WIDTH) -> LadderResult:
    usable, excluded = [], []
    for est, rho in zip(estimates, ladder.rhos):
        if est.hits >= MIN_FIT_HITS and est.rel_ci_width <= max_rel_ci_width:
            usable.append((rho, est.p_hat))
        else:
            excluded.append(est.snr_db)
    if excluded:
        logger.info(f"Rungs excluded from the slope fit: {excluded}")
    try:
        fit = fit_diversity(usable)
        fit_error = None
    except FitError as e:
        logger.warning(f"Slope fit failed: {e}")
        fit, fit_error = None, str(e)
    return LadderResult(ladder, estimates, fit, fit_error, excluded)


def estimates_frame(estimates: Sequence[OutageEstimate]) -> pd.DataFrame:
    return pd.DataFrame([e.to_row() for e in estimates], columns=CSV_COLUMNS)
