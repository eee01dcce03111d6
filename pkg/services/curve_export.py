import logging
from typing import List

import numpy as np
import pandas as pd

from services.converse_audit import simple_bound_envelope
from services.dmt_analytic import (
    AntennaConfig,
    d1,
    d1_curve,
    parallel_dmt,
    prop1_dmt,
    prop2_dmt,
    streaming_dmt,
)
from services.errors import DomainError

logger = logging.getLogger(__name__)

# Configuration
ENVELOPE_N_MAX = 50
CURVE_COLUMNS = ["r", "d1", "d_T", "d_parallel", "prop1", "prop2", "simple_envelope"]


def r_grid(cfg: AntennaConfig, step: float) -> np.ndarray:
    """0, step, 2 step, ... up to min(nt, nr), endpoint included"""
    if not step > 0:
        raise DomainError(f"grid step must be > 0, got {step}")
    upper = cfg.min_dim
    n = int(np.floor(upper / step + 1e-9)) + 1
    grid = np.round(np.arange(n) * step, 12)
    if upper - grid[-1] > 1e-9:
        grid = np.append(grid, float(upper))
    return grid


def curve_rows(cfg: AntennaConfig, delay: int, step: float) -> List[dict]:
    rows = []
    for r in r_grid(cfg, step):
        r = float(r)
        row = {
            "r": r,
            "d1": d1(cfg, r),
            "d_T": streaming_dmt(delay, cfg, r),
            "d_parallel": parallel_dmt(delay, cfg, r * delay),
            "prop1": None,
            "prop2": None,
            "simple_envelope": None,
        }
        # the two-message schemes and the simple bound are SISO statements
        if cfg.is_siso:
            row["prop1"] = prop1_dmt(r)
            row["prop2"] = prop2_dmt(r)
            if delay == 2:
                row["simple_envelope"] = simple_bound_envelope(r, ENVELOPE_N_MAX)[0]
        rows.append(row)
    return rows


def curve_table(cfg: AntennaConfig, delay: int, step: float) -> pd.DataFrame:
    if delay < 1:
        raise DomainError(f"delay must be >= 1, got {delay}")
    rows = curve_rows(cfg, delay, step)
    logger.debug(f"Sampled {len(rows)} curve rows for nt={cfg.nt}, nr={cfg.nr}, T={delay}")
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def breakpoints_record(cfg: AntennaConfig) -> dict:
    curve = d1_curve(cfg)
    return {
        "nt": cfg.nt,
        "nr": cfg.nr,
        "breakpoints": [[float(r), float(d)] for r, d in curve.breakpoints],
        "slopes": [float(s) for s in curve.slopes()],
        "convex": curve.is_convex(),
    }
