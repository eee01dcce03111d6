"""
Outage-level models of the streaming schemes: diagonal interleaving, the
decision-directed tree code, the two-message superposition scheme and the
naive per-message scheme. Errors are outage events of the mutual
information, not symbol-level decoding failures.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from services.dmt_analytic import AntennaConfig, delta_offset
from services.errors import DomainError
from services.mimo_channel import RngSpec, mutual_info_batch, sample_blocks
from services.outage_mc import (
    BATCH_TRIALS,
    LadderResult,
    OutageEstimate,
    OutageSimulator,
    SnrLadder,
    TiltSpec,
    default_tilt,
    fit_ladder,
    run_ladder,
    single_link_outage_event,
)

logger = logging.getLogger(__name__)

# Configuration
DEFAULT_EPSILON = 0.01
PROP1_EVENTS = ("union", "first", "second")


@dataclass(frozen=True)
class StreamSpec:
    cfg: AntennaConfig
    T: int
    r: float
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.T < 1:
            raise DomainError(f"delay T must be >= 1, got {self.T}")
        if self.r < 0 or self.r > self.cfg.min_dim:
            raise DomainError(f"r={self.r} outside [0, {self.cfg.min_dim}]")
        if self.epsilon < 0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")


# -- interleaving ------------------------------------------------------------

def interleave_outage(spec: StreamSpec, C: Sequence[float], rho: float) -> bool:
    """(1/T) sum_j C_j <= r log2 rho over the T blocks a message spans"""
    if len(C) != spec.T:
        raise DomainError(f"expected {spec.T} mutual informations, got {len(C)}")
    if any(c < 0 for c in C):
        raise DomainError("mutual informations must be >= 0")
    return sum(C) / spec.T <= spec.r * math.log2(rho)


def interleave_event(spec: StreamSpec):
    def event(H: np.ndarray, rho: float) -> np.ndarray:
        C = mutual_info_batch(H, rho)
        return np.mean(C, axis=1) <= spec.r * math.log2(rho)
    return event


def interleave_sim(spec: StreamSpec, ladder: SnrLadder, trials, rng: RngSpec,
                   tilt: Optional[TiltSpec] = None,
                   simulator: Optional[OutageSimulator] = None) -> LadderResult:
    if tilt is None:
        tilt = default_tilt(spec.r, spec.cfg.nr, spec.cfg.nt, spec.T)
    logger.info(f"Interleaving T={spec.T} r={spec.r} over {len(ladder)} rungs, tilt={tilt.theta}")
    return run_ladder(interleave_event(spec), ladder, trials, rng,
                      nr=spec.cfg.nr, nt=spec.cfg.nt, n_blocks=spec.T,
                      tilt=tilt, simulator=simulator)


# -- tree code -----------------------------------------------------------------

def _step_coefficient(spec: StreamSpec, l: int, k: int, delta: float) -> float:
    return (k + spec.T - l) * spec.r + (k - l) * delta + 4.0 * spec.epsilon


def treecode_step_outage(spec: StreamSpec, l: int, k: int, C: Sequence[float], rho: float) -> bool:
    """
    Step outage O_l at deadline k + T - 1: the blocks l .. k+T-1 carry at most
    [(k+T-l) r + (k-l) Delta(r) + 4 eps] log2 rho bits.
    """
    if not (0 <= l <= k):
        raise IndexError(f"need 0 <= l <= k, got l={l}, k={k}")
    if len(C) != k + spec.T - l:
        raise IndexError(f"expected {k + spec.T - l} blocks (l..k+T-1), got {len(C)}")
    coeff = _step_coefficient(spec, l, k, delta_offset(spec.cfg, spec.r))
    return sum(C) <= coeff * math.log2(rho)


@dataclass
class TreeSimReport:
    snr_db: float
    per_k_error: List[OutageEstimate]
    per_lag_event_rate: Dict[int, float]
    lag0_only_fraction: float

    def to_dict(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "per_k": [
                {"k": k, "trials": e.trials, "errors": e.hits, "p_hat": e.p_hat,
                 "ci_lo": e.ci_lo, "ci_hi": e.ci_hi}
                for k, e in enumerate(self.per_k_error)
            ],
            "per_lag": [{"lag": lag, "rate": rate}
                        for lag, rate in sorted(self.per_lag_event_rate.items())],
            "lag0_only_fraction": self.lag0_only_fraction,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class _TreeCounts:
    trials: int
    errors: np.ndarray       # per k
    lag_events: np.ndarray   # per lag
    lag0_only: int
    total_errors: int

    def merge(self, other: "_TreeCounts") -> "_TreeCounts":
        return _TreeCounts(
            self.trials + other.trials,
            self.errors + other.errors,
            self.lag_events + other.lag_events,
            self.lag0_only + other.lag0_only,
            self.total_errors + other.total_errors,
        )


class TreeCodeSimulator:
    """
    Decision-directed decoder at the outage level. Per trial a K+T-1 block
    channel sequence is drawn; message k (deadline k+T-1) is in error iff a
    step outage O_l holds for some l <= k.
    """

    def __init__(self, spec: StreamSpec, horizon: int, atypicality_mf: Optional[float] = None,
                 workers: int = 1, batch_trials: int = BATCH_TRIALS):
        if horizon < 1:
            raise DomainError(f"horizon K must be >= 1, got {horizon}")
        if atypicality_mf is not None and atypicality_mf <= 0:
            raise DomainError(f"atypicality_mf must be > 0, got {atypicality_mf}")
        self.spec = spec
        self.horizon = horizon
        self.atypicality_mf = atypicality_mf
        self.delta = delta_offset(spec.cfg, spec.r)
        self.simulator = OutageSimulator(workers, batch_trials)

    @property
    def n_blocks(self) -> int:
        return self.horizon + self.spec.T - 1

    def _run_batch(self, rho: float, size: int, rng: RngSpec) -> _TreeCounts:
        spec, K, T = self.spec, self.horizon, self.spec.T
        H = sample_blocks(spec.cfg.nr, spec.cfg.nt, self.n_blocks, size, rng)
        C = mutual_info_batch(H, rho)
        prefix = np.concatenate([np.zeros((size, 1)), np.cumsum(C, axis=1)], axis=1)
        log_rho = math.log2(rho)

        # synthetic atypicality failures come from a stream no block uses
        uniforms = None
        if self.atypicality_mf is not None:
            uniforms = rng.block_rng(self.n_blocks).random((size, K, K))

        errors = np.zeros(K, dtype=np.int64)
        lag_events = np.zeros(K, dtype=np.int64)
        lag0_only = 0
        total_errors = 0
        for k in range(K):
            end = prefix[:, k + T]
            step = np.zeros((size, k + 1), dtype=bool)
            for l in range(k + 1):
                budget = _step_coefficient(spec, l, k, self.delta) * log_rho
                step[:, l] = end - prefix[:, l] <= budget
                if uniforms is not None:
                    p_fail = 2.0 ** (-self.atypicality_mf * (k + T - l))
                    step[:, l] |= uniforms[:, k, l] < p_fail
                lag_events[k - l] += int(np.count_nonzero(step[:, l]))
            err = np.any(step, axis=1)
            n_err = int(np.count_nonzero(err))
            errors[k] = n_err
            total_errors += n_err
            only_recent = step[:, k] & ~np.any(step[:, :k], axis=1)
            lag0_only += int(np.count_nonzero(only_recent))
        return _TreeCounts(size, errors, lag_events, lag0_only, total_errors)

    def run_rung(self, snr_db: float, rho: float, trials: int, rng: RngSpec) -> TreeSimReport:
        sizes = self.simulator.batch_sizes(trials)
        if self.simulator.workers == 1 or len(sizes) == 1:
            parts = [self._run_batch(rho, n, rng.child(b)) for b, n in enumerate(sizes)]
        else:
            with ThreadPoolExecutor(max_workers=self.simulator.workers) as pool:
                parts = list(pool.map(lambda b: self._run_batch(rho, sizes[b], rng.child(b)),
                                      range(len(sizes))))
        counts = parts[0]
        for part in parts[1:]:
            counts = counts.merge(part)

        K = self.horizon
        per_k = []
        for k in range(K):
            n_err = int(counts.errors[k])
            est = OutageEstimate(trials, n_err, float(n_err), float(n_err), 0.0, snr_db=snr_db)
            per_k.append(est)
        # lag j is observable for messages k = j .. K-1
        per_lag = {lag: float(counts.lag_events[lag]) / (trials * (K - lag)) for lag in range(K)}
        lag0_only = counts.lag0_only / counts.total_errors if counts.total_errors else 0.0
        logger.info(f"Tree code at {snr_db:g} dB: p_k={[round(e.p_hat, 6) for e in per_k]}")
        return TreeSimReport(snr_db, per_k, per_lag, lag0_only)


def treecode_decode_sim(spec: StreamSpec, horizon: int, ladder: SnrLadder, trials: int,
                        rng: RngSpec, atypicality_mf: Optional[float] = None,
                        workers: int = 1) -> List[TreeSimReport]:
    sim = TreeCodeSimulator(spec, horizon, atypicality_mf=atypicality_mf, workers=workers)
    return [
        sim.run_rung(snr_db, rho, trials, rng.child(i))
        for i, (snr_db, rho) in enumerate(zip(ladder.points_db, ladder.rhos))
    ]


def fit_per_k(reports: Sequence[TreeSimReport], ladder: SnrLadder) -> List[LadderResult]:
    """One slope fit per message index, over the rungs of the ladder"""
    if not reports:
        return []
    K = len(reports[0].per_k_error)
    return [fit_ladder(ladder, [rep.per_k_error[k] for rep in reports]) for k in range(K)]


# -- two-message superposition scheme ------------------------------------------

def _beta(r: float, beta: Optional[float]) -> float:
    return r / 2.0 if beta is None else beta


def prop1_outage_first(h: complex, rho: float, r: float, beta: Optional[float] = None) -> bool:
    """
    Decoding the first layer with the cloud codeword as noise:
    1/2 log2(1 + |h|^2 rho / (1 + |h|^2 rho^(1-beta))) <= r/4 log2 rho.
    """
    g = abs(h) ** 2
    b = _beta(r, beta)
    lhs = 0.5 * math.log2(1.0 + g * rho / (1.0 + g * rho ** (1.0 - b)))
    return lhs <= r / 4.0 * math.log2(rho)


def prop1_outage_second(h_k: complex, h_next: complex, rho: float, r: float,
                        beta: Optional[float] = None) -> bool:
    """1/2 log2(1 + rho^(1-beta) |h_k|^2) + 1/2 log2(1 + rho |h_next|^2) <= 3r/4 log2 rho"""
    b = _beta(r, beta)
    lhs = (0.5 * math.log2(1.0 + rho ** (1.0 - b) * abs(h_k) ** 2)
           + 0.5 * math.log2(1.0 + rho * abs(h_next) ** 2))
    return lhs <= 0.75 * r * math.log2(rho)


def _first_mask(g: np.ndarray, rho: float, r: float, b: float) -> np.ndarray:
    lhs = 0.5 * np.log2(1.0 + g * rho / (1.0 + g * rho ** (1.0 - b)))
    return lhs <= r / 4.0 * math.log2(rho)


def _second_mask(g0: np.ndarray, g1: np.ndarray, rho: float, r: float, b: float) -> np.ndarray:
    lhs = 0.5 * np.log2(1.0 + rho ** (1.0 - b) * g0) + 0.5 * np.log2(1.0 + rho * g1)
    return lhs <= 0.75 * r * math.log2(rho)


def prop1_event(r: float, beta: Optional[float] = None, event: str = "union"):
    """Vectorised superposition outage over two SISO blocks (h_k, h_next)"""
    if event not in PROP1_EVENTS:
        raise DomainError(f"event must be one of {PROP1_EVENTS}, got {event!r}")
    b = _beta(r, beta)

    def predicate(H: np.ndarray, rho: float) -> np.ndarray:
        g0 = np.abs(H[:, 0, 0, 0]) ** 2
        g1 = np.abs(H[:, 1, 0, 0]) ** 2
        if event == "first":
            return _first_mask(g0, rho, r, b)
        if event == "second":
            return _second_mask(g0, g1, rho, r, b)
        return _first_mask(g0, rho, r, b) | _second_mask(g0, g1, rho, r, b)
    return predicate


def prop1_first_closed_form(rho: float, r: float, beta: Optional[float] = None) -> float:
    """
    Pr of the first superposition event with |h|^2 ~ Exp(1). The event is
    |h|^2 (rho - tau rho^(1-beta)) <= tau with tau = rho^(r/2) - 1.
    """
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    b = _beta(r, beta)
    tau = rho ** (r / 2.0) - 1.0
    if tau <= 0.0:
        return 0.0
    denom = rho - tau * rho ** (1.0 - b)
    if denom <= 0.0:
        return 1.0
    return -math.expm1(-tau / denom)


def prop1_sim(ladder: SnrLadder, r: float, trials, rng: RngSpec,
              beta: Optional[float] = None, event: str = "union",
              simulator: Optional[OutageSimulator] = None) -> LadderResult:
    if not (0 < r < 1):
        raise DomainError(f"r must lie in (0, 1), got {r}")
    logger.info(f"Superposition scheme r={r} beta={_beta(r, beta)} event={event}")
    return run_ladder(prop1_event(r, beta, event), ladder, trials, rng,
                      nr=1, nt=1, n_blocks=2, tilt=TiltSpec(0.0), simulator=simulator)


# -- naive per-message scheme --------------------------------------------------

def naive_scheme_sim(ladder: SnrLadder, r: float, trials, rng: RngSpec,
                     tilt: Optional[TiltSpec] = None,
                     simulator: Optional[OutageSimulator] = None) -> LadderResult:
    """Each message alone on one SISO block: outage {log2(1 + rho |h|^2) <= r log2 rho}"""
    if r < 0:
        raise DomainError(f"r must be >= 0, got {r}")
    if tilt is None:
        tilt = default_tilt(r)
    return run_ladder(single_link_outage_event(r), ladder, trials, rng,
                      nr=1, nt=1, n_blocks=1, tilt=tilt, simulator=simulator)
