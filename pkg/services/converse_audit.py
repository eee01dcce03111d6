"""
Executable arithmetic of the converse argument: amplification thresholds,
the rate-budget contradiction, the outage amplification trace, the simple
bound envelope and the multicast bracket.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from services.dmt_analytic import AntennaConfig, d1, simple_bound
from services.errors import DomainError
from services.mimo_channel import mutual_info_batch
from services.outage_mc import siso_outage_closed_form

logger = logging.getLogger(__name__)

# Configuration
MAX_DENOMINATOR = 10**6


def _exact(x: float) -> Fraction:
    return Fraction(x).limit_denominator(MAX_DENOMINATOR)


def _check_slack(r: float, delta: float):
    if not (0 < delta < r):
        raise DomainError(f"delta must lie in (0, r), got r={r}, delta={delta}")


def amplification_bracket(N: int, T: int, r: float, delta: float) -> float:
    """1 - N(r - delta) / ((N - T) r), defined for N > T"""
    _check_slack(r, delta)
    if N <= T:
        raise DomainError(f"bracket needs N > T, got N={N}, T={T}")
    r_, d_ = _exact(r), _exact(delta)
    return float(1 - N * (r_ - d_) / ((N - T) * r_))


@dataclass(frozen=True)
class ThresholdResult:
    n_star: int
    bracket: float

    def to_dict(self) -> dict:
        return {"N_star": self.n_star, "bracket": self.bracket}


def amplification_threshold(T: int, r: float, delta: float) -> ThresholdResult:
    """Smallest N with N delta > T r, and the bracket there"""
    _check_slack(r, delta)
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    # exact rational arithmetic keeps N delta = T r boundaries on the right side
    n_star = math.floor(T * _exact(r) / _exact(delta)) + 1
    return ThresholdResult(n_star, amplification_bracket(n_star, T, r, delta))


@dataclass(frozen=True)
class BudgetCheck:
    decodable: float
    required: float
    contradiction: bool

    def to_dict(self) -> dict:
        return {
            "decodable": self.decodable,
            "required": self.required,
            "contradiction": self.contradiction,
        }


def siso_budget_check(r: float, delta: float, N: int) -> BudgetCheck:
    _check_slack(r, delta)
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    r_, d_ = _exact(r), _exact(delta)
    decodable = (N + 1) * (r_ - d_)
    required = N * r_
    return BudgetCheck(float(decodable), float(required), required > decodable)


@dataclass(frozen=True)
class AmplificationScenario:
    r: float
    delta: float
    T: int
    rho: float
    gains: Tuple[float, ...]

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError(f"delta must be > 0, got {self.delta}")
        if not self.rho > 1:
            raise DomainError(f"rho must be > 1, got {self.rho}")
        if any(g < 0 for g in self.gains):
            raise DomainError("gains must be nonnegative")

    @property
    def threshold(self) -> float:
        """Per-link outage level rho^-(1 - r + delta)"""
        return self.rho ** (-(1.0 - self.r + self.delta))


@dataclass
class TraceStep:
    k: int
    effective_gains: List[float]
    member: bool

    def to_dict(self) -> dict:
        return {"k": self.k, "effective_gains": self.effective_gains, "member": self.member}


@dataclass
class TraceReport:
    steps: List[TraceStep] = field(default_factory=list)
    offending_block: Optional[int] = None
    message: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.offending_block is None and all(s.member for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "offending_block": self.offending_block,
            "message": self.message,
            "steps": [s.to_dict() for s in self.steps],
        }


def _in_hk(gains: Sequence[float], k: int, threshold: float) -> bool:
    decoded = all(g >= 1.0 for g in gains[:k])
    return decoded and gains[k] <= threshold and gains[k + 1] <= threshold


def amplification_trace(sc: AmplificationScenario) -> TraceReport:
    """
    Sequentially decode message k, lift block k's effective gain to 1, and
    check that the effective gain vector at step k lies in H_k.
    """
    if sc.T != 2:
        raise DomainError(f"the amplification trace is defined for T = 2, got T={sc.T}")
    if len(sc.gains) < 2:
        raise DomainError(f"need at least two gains, got {len(sc.gains)}")
    threshold = sc.threshold
    for j, g in enumerate(sc.gains):
        if g > threshold:
            msg = f"block {j} gain {g:.6g} exceeds the outage level {threshold:.6g}"
            logger.info(f"Trace precondition failed: {msg}")
            return TraceReport(offending_block=j, message=msg)

    steps = []
    for k in range(len(sc.gains) - 1):
        effective = [1.0] * k + [float(sc.gains[k]), float(sc.gains[k + 1])]
        steps.append(TraceStep(k, effective, _in_hk(effective, k, threshold)))
    return TraceReport(steps=steps)


def format_trace(report: TraceReport) -> str:
    if report.offending_block is not None:
        return f"precondition violated: {report.message}\n"
    lines = [f"{'k':>3}  {'member':<6}  effective gains"]
    for s in report.steps:
        gains = " ".join(f"{g:.4g}" for g in s.effective_gains)
        lines.append(f"{s.k:>3}  {str(s.member):<6}  {gains}")
    return "\n".join(lines) + "\n"


def simple_bound_envelope(r: float, N_max: int) -> Tuple[float, int]:
    if r < 0 or N_max < 0:
        raise DomainError(f"envelope needs r >= 0 and N_max >= 0, got r={r}, N_max={N_max}")
    values = [simple_bound(N, r) for N in range(N_max + 1)]
    best = min(values)
    return best, values.index(best)


def multicast_bracket(r: float, delta: float, rho: float, N: int) -> float:
    """1 - (N + 1)(1 + (r - delta) log2 rho) / (N r log2 rho)"""
    _check_slack(r, delta)
    if not rho > 1:
        raise DomainError(f"rho must be > 1, got {rho}")
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    L = math.log2(rho)
    return 1.0 - (N + 1) * (1.0 + (r - delta) * L) / (N * r * L)


def multicast_threshold(r: float, delta: float, rho: float) -> Optional[int]:
    """
    Smallest N with a positive multicast bracket. The bracket is positive
    iff N (delta L - 1) > 1 + (r - delta) L, so None when delta L <= 1.
    """
    _check_slack(r, delta)
    if not rho > 1:
        raise DomainError(f"rho must be > 1, got {rho}")
    L = math.log2(rho)
    slope = delta * L - 1.0
    if slope <= 0:
        return None
    n = max(1, math.floor((1.0 + (r - delta) * L) / slope) + 1)
    # guard the floor against rounding at exact crossings
    while multicast_bracket(r, delta, rho, n) <= 0:
        n += 1
    while n > 1 and multicast_bracket(r, delta, rho, n - 1) > 0:
        n -= 1
    return n


@dataclass(frozen=True)
class FanoBound:
    bracket: float
    exponent: float
    positive: bool

    def to_dict(self) -> dict:
        return {"bracket": self.bracket, "exponent": self.exponent, "positive": self.positive}


def fano_lower_bound(cfg: AntennaConfig, T: int, r: float, delta: float, N: int) -> FanoBound:
    """
    Error lower bound of the general converse: when the bracket is positive,
    Pr(e) is at least of order rho^-(T d1(r - delta)).
    """
    bracket = amplification_bracket(N, T, r, delta)
    exponent = T * d1(cfg, r - delta)
    return FanoBound(bracket, exponent, bracket > 0)


def hdelta_product_probability(rho: float, r: float, delta: float, T: int) -> float:
    """(P_delta)^T for SISO, with P_delta the single-block outage at rate r - delta"""
    _check_slack(r, delta)
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    return siso_outage_closed_form(rho, r - delta) ** T


def hdelta_event(r: float, delta: float):
    """Every block's mutual information at most (r - delta) log2 rho"""
    _check_slack(r, delta)

    def event(H: np.ndarray, rho: float) -> np.ndarray:
        C = mutual_info_batch(H, rho)
        return np.all(C <= (r - delta) * math.log2(rho), axis=1)
    return event
