import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from services.errors import DimensionError, DomainError, GridError

logger = logging.getLogger(__name__)

# Configuration
MAX_ORACLE_BRANCHES = 4        # largest L the brute-force parallel oracle accepts
MAX_GRID_POINTS = 10_000_000   # per oracle call
DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class AntennaConfig:
    nt: int
    nr: int

    def __post_init__(self):
        if self.nt < 1 or self.nr < 1:
            raise DimensionError(f"antenna counts must be >= 1, got nt={self.nt}, nr={self.nr}")

    @property
    def min_dim(self) -> int:
        return min(self.nt, self.nr)

    @property
    def is_siso(self) -> bool:
        return self.nt == 1 and self.nr == 1


SISO = AntennaConfig(1, 1)


@dataclass(frozen=True)
class DmtCurve:
    """
    Piecewise-linear diversity curve. Breakpoints are stored exactly
    (Fractions); evaluation interpolates in floating point.
    """
    breakpoints: Tuple[Tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        if len(self.breakpoints) < 2:
            raise DomainError("a DMT curve needs at least two breakpoints")
        rs = [p[0] for p in self.breakpoints]
        ds = [p[1] for p in self.breakpoints]
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise DomainError("breakpoint multiplexing gains must be strictly increasing")
        if any(b > a for a, b in zip(ds, ds[1:])) or min(ds) < 0:
            raise DomainError("breakpoint diversities must be non-increasing and >= 0")
        if ds[-1] != 0:
            raise DomainError("last breakpoint must have zero diversity")

    @property
    def r_max(self) -> float:
        return float(self.breakpoints[-1][0])

    def evaluate(self, r: float) -> float:
        r0 = float(self.breakpoints[0][0])
        if r < r0 - DOMAIN_TOL or r > self.r_max + DOMAIN_TOL:
            raise DomainError(f"r={r} outside [{r0}, {self.r_max}]")
        xs = [float(p[0]) for p in self.breakpoints]
        ys = [float(p[1]) for p in self.breakpoints]
        return float(np.interp(min(max(r, r0), self.r_max), xs, ys))

    def slopes(self) -> List[Fraction]:
        pts = self.breakpoints
        return [(b[1] - a[1]) / (b[0] - a[0]) for a, b in zip(pts, pts[1:])]

    def is_convex(self) -> bool:
        s = self.slopes()
        return all(b >= a for a, b in zip(s, s[1:]))

    def to_json(self) -> str:
        return json.dumps([[float(r), float(d)] for r, d in self.breakpoints])


@lru_cache(maxsize=64)
def d1_curve(cfg: AntennaConfig) -> DmtCurve:
    """Breakpoints (k, (nr-k)(nt-k)) for k = 0..min(nt, nr)"""
    points = tuple(
        (Fraction(k), Fraction((cfg.nr - k) * (cfg.nt - k)))
        for k in range(cfg.min_dim + 1)
    )
    return DmtCurve(points)


def d1(cfg: AntennaConfig, r: float) -> float:
    return d1_curve(cfg).evaluate(r)


def max_slope(cfg: AntennaConfig) -> int:
    """Steepest segment of d1, the one leaving r = 0"""
    return cfg.nt + cfg.nr - 1


def parallel_dmt(L: int, cfg: AntennaConfig, r: float) -> float:
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    if r < -DOMAIN_TOL or r > L * cfg.min_dim + DOMAIN_TOL:
        raise DomainError(f"r={r} outside [0, {L * cfg.min_dim}]")
    return L * d1(cfg, r / L)


def streaming_dmt(T: int, cfg: AntennaConfig, r: float) -> float:
    if T < 1:
        raise DomainError(f"delay T must be >= 1, got {T}")
    return T * d1(cfg, r)


def delta_offset(cfg: AntennaConfig, r: float) -> float:
    """Exponent offset used by the tree-code step outage sets"""
    if r < 0 or r >= cfg.min_dim:
        raise DomainError(f"delta offset needs 0 <= r < {cfg.min_dim}, got {r}")
    return (cfg.nt - r) * (cfg.nr - r) / (2.0 * (cfg.nt + cfg.nr - 2.0 * r))


def _grid(upper: float, step: float) -> np.ndarray:
    n = int(np.floor(upper / step + 1e-9)) + 1
    grid = np.arange(n) * step
    if upper - grid[-1] > 1e-12:
        grid = np.append(grid, upper)
    return grid


def parallel_min_oracle(L: int, cfg: AntennaConfig, s: float, grid_step: float) -> float:
    """
    Brute-force min of sum_l d1(r_l) over nonnegative grid points with
    sum r_l <= s. Raises GridError when the grid minimum misses L*d1(s/L)
    by more than L * max_slope * grid_step.
    """
    if L < 1 or L > MAX_ORACLE_BRANCHES:
        raise GridError(f"oracle supports 1 <= L <= {MAX_ORACLE_BRANCHES}, got {L}")
    if grid_step <= 0:
        raise DomainError(f"grid_step must be > 0, got {grid_step}")
    if s < 0 or s > L * cfg.min_dim + DOMAIN_TOL:
        raise DomainError(f"s={s} outside [0, {L * cfg.min_dim}]")

    grid = _grid(min(s, cfg.min_dim), grid_step)
    if len(grid) ** L > MAX_GRID_POINTS:
        raise GridError(f"{len(grid)}^{L} grid points exceed the cap of {MAX_GRID_POINTS}")
    values = np.array([d1(cfg, float(x)) for x in grid])

    total = np.zeros((1,) * L)
    rate = np.zeros((1,) * L)
    for axis in range(L):
        shape = [1] * L
        shape[axis] = len(grid)
        total = total + values.reshape(shape)
        rate = rate + grid.reshape(shape)
    best = float(np.min(np.where(rate <= s + 1e-9, total, np.inf)))

    expected = parallel_dmt(L, cfg, s)
    tolerance = L * max_slope(cfg) * grid_step
    if abs(best - expected) > tolerance + 1e-9:
        raise GridError(
            f"grid minimum {best:.6f} misses {expected:.6f} by more than {tolerance:.6f}; "
            f"use a finer grid"
        )
    return best


def simple_bound(N: int, r: float) -> float:
    """Upper bound obtained by revealing N future messages (SISO, T = 2)"""
    if N < 0 or r < 0:
        raise DomainError(f"simple bound needs N >= 0 and r >= 0, got N={N}, r={r}")
    return max(0.0, (N + 2) - (N + 1) * r)


def _check_unit(r: float):
    if r < 0 or r > 1:
        raise DomainError(f"r={r} outside [0, 1]")


def prop1_dmt(r: float) -> float:
    """Two messages per block, arrival offset known: min(1 - r/2, 2 - 2r)"""
    _check_unit(r)
    return min(1.0 - r / 2.0, 2.0 - 2.0 * r)


def prop2_dmt(r: float) -> float:
    """Two messages per block, arrival offset unknown to the transmitter"""
    _check_unit(r)
    return 1.0 - r


def prop1_region_oracle(r: float, grid_step: float, beta: Optional[float] = None) -> float:
    """
    Grid minimum of (1-a1)^+ + (1-a2)^+ over {(a1 - beta)^+ + a2 <= 3r/2}
    inside [0, 1+r]^2. beta defaults to r/2.
    """
    if r <= 0 or r > 1:
        raise DomainError(f"r={r} outside (0, 1]")
    if grid_step <= 0:
        raise DomainError(f"grid_step must be > 0, got {grid_step}")
    beta = r / 2.0 if beta is None else beta
    upper = 1.0 + r
    n = int(round(upper / grid_step)) + 1
    if n * n > MAX_GRID_POINTS:
        raise GridError(f"{n}^2 grid points exceed the cap of {MAX_GRID_POINTS}")
    a = np.linspace(0.0, upper, n)
    a1, a2 = np.meshgrid(a, a, indexing="ij")
    feasible = np.maximum(a1 - beta, 0.0) + a2 <= 1.5 * r + 1e-9
    objective = np.maximum(1.0 - a1, 0.0) + np.maximum(1.0 - a2, 0.0)
    return float(np.min(np.where(feasible, objective, np.inf)))


def prop1_first_exponent(r: float, beta: Optional[float] = None) -> float:
    """
    Exact exponent of the first superposition outage event. The event is
    |h|^2 <= tau / (rho - tau rho^(1-beta)) with tau = rho^(r/2) - 1, which
    decays like rho^-(1-r) when beta = r/2 and rho^-(1-r/2) when beta > r/2.
    """
    _check_unit(r)
    beta = r / 2.0 if beta is None else beta
    if beta < r / 2.0 - DOMAIN_TOL:
        return 0.0
    if abs(beta - r / 2.0) <= DOMAIN_TOL:
        return 1.0 - r
    return 1.0 - r / 2.0


def prop1_second_exponent(r: float, beta: Optional[float] = None) -> float:
    """Closed form of the region minimisation: (2 - min(beta, 1) - 3r/2)^+"""
    _check_unit(r)
    beta = r / 2.0 if beta is None else beta
    return max(0.0, 2.0 - min(max(beta, 0.0), 1.0) - 1.5 * r)


def treecode_lag_exponent(cfg: AntennaConfig, T: int, r: float, lag: int,
                          epsilon: float = 0.0) -> float:
    """
    Diversity of the step outage set at lag k - l: a parallel channel with
    L = lag + T branches at total multiplexing L r + lag Delta(r) + 4 eps.
    """
    if lag < 0:
        raise DomainError(f"lag must be >= 0, got {lag}")
    L = lag + T
    s = L * r + lag * delta_offset(cfg, r) + 4.0 * epsilon
    if s > L * cfg.min_dim:
        return 0.0
    return parallel_dmt(L, cfg, s)


def treecode_lag_bound(cfg: AntennaConfig, T: int, r: float, lag: int) -> float:
    """
    T d1(r) + lag/2 d1(r). Below treecode_lag_exponent at eps = 0 for SISO; on
    MIMO it needs Delta(r) <= d1(r) / (2 |slope of d1|), which fails for 2x2
    at r = 0.7.
    """
    base = d1(cfg, r)
    return T * base + lag / 2.0 * base
