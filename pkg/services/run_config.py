import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional

from services.dmt_analytic import AntennaConfig
from services.errors import ConfigError, DimensionError, DomainError
from services.outage_mc import SnrLadder

logger = logging.getLogger(__name__)

# Configuration
SUBCOMMANDS = ("curves", "outage", "scheme", "treesim", "audit")
SCHEMES = ("interleave", "prop1", "naive")
PROP1_EVENTS = ("union", "first", "second")
AUDIT_CHECKS = ("threshold", "budget", "trace", "envelope", "multicast", "fano", "hdelta")
FORMATS = ("csv", "json")

DEFAULTS = {
    "nt": 1,
    "nr": 1,
    "delay": 2,
    "rate": 0.5,
    "r_step": 0.05,
    "snr_start_db": 10.0,
    "snr_stop_db": 30.0,
    "snr_step_db": 5.0,
    "trials": 100_000,
    "tilt": None,
    "epsilon": 0.01,
    "horizon": 6,
    "seed": 1,
    "workers": 1,
    "format": "csv",
    "scheme": "interleave",
    "prop1_event": "union",
    "beta": None,
    "check": "threshold",
    "delta": 0.1,
    "n": None,
    "rho_db": 60.0,
    "gains": None,
    "mf": None,
    "record": False,
}


def _to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _to_gains(value) -> List[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).replace(",", " ").split()]


COERCE = {
    "nt": int, "nr": int, "delay": int, "horizon": int, "seed": int, "workers": int,
    "trials": int, "n": int,
    "rate": float, "r_step": float, "snr_start_db": float, "snr_stop_db": float,
    "snr_step_db": float, "tilt": float, "epsilon": float, "beta": float,
    "delta": float, "rho_db": float, "mf": float,
    "format": str, "scheme": str, "prop1_event": str, "check": str, "out_dir": str,
    "gains": _to_gains, "record": _to_bool,
}


@dataclass
class RunConfig:
    subcommand: str
    out_dir: str
    nt: int = 1
    nr: int = 1
    delay: int = 2
    rate: float = 0.5
    r_step: float = 0.05
    snr_start_db: float = 10.0
    snr_stop_db: float = 30.0
    snr_step_db: float = 5.0
    trials: int = 100_000
    tilt: Optional[float] = None
    epsilon: float = 0.01
    horizon: int = 6
    seed: int = 1
    workers: int = 1
    format: str = "csv"
    scheme: str = "interleave"
    prop1_event: str = "union"
    beta: Optional[float] = None
    check: str = "threshold"
    delta: float = 0.1
    n: Optional[int] = None
    rho_db: float = 60.0
    gains: Optional[List[float]] = None
    mf: Optional[float] = None
    record: bool = False
    config_file: Optional[str] = None
    ladder: Optional[SnrLadder] = field(default=None, repr=False, compare=False)

    @property
    def antennas(self) -> AntennaConfig:
        return AntennaConfig(self.nt, self.nr)

    def echo(self) -> Dict:
        """JSON-friendly copy of every setting"""
        data = asdict(self)
        data.pop("ladder", None)
        return data


def _merge(file_values: Mapping[str, Optional[str]], flag_values: Mapping[str, object],
           out_dir_default: str) -> Dict[str, object]:
    merged: Dict[str, object] = dict(DEFAULTS)
    merged["out_dir"] = out_dir_default
    for source in (file_values, flag_values):
        for key, value in source.items():
            if value is None:
                continue
            if key not in COERCE:
                if source is file_values:
                    raise ConfigError(f"unknown config key: {key}")
                continue
            try:
                merged[key] = COERCE[key](value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad value for {key}: {value!r} ({e})")
    return merged


def build_run_config(subcommand: str, flag_values: Mapping[str, object],
                     file_values: Optional[Mapping[str, Optional[str]]] = None,
                     out_dir_default: str = "runs",
                     config_file: Optional[str] = None) -> RunConfig:
    """Defaults < config file < flags, then every field is validated for the subcommand"""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand: {subcommand}")
    values = _merge(file_values or {}, flag_values, out_dir_default)
    cfg = RunConfig(subcommand=subcommand, config_file=config_file, **values)
    try:
        _validate(cfg)
    except (DomainError, DimensionError) as e:
        raise ConfigError(str(e)) from e
    return cfg


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


def _validate_ladder(cfg: RunConfig):
    _require(cfg.snr_step_db > 0, f"snr_step_db must be > 0, got {cfg.snr_step_db}")
    _require(cfg.snr_start_db <= cfg.snr_stop_db,
             f"snr_start_db {cfg.snr_start_db} exceeds snr_stop_db {cfg.snr_stop_db}")
    cfg.ladder = SnrLadder.from_range(cfg.snr_start_db, cfg.snr_stop_db, cfg.snr_step_db)


def _validate_rate(cfg: RunConfig, upper: float, open_upper: bool = False):
    ok = 0 <= cfg.rate < upper if open_upper else 0 <= cfg.rate <= upper
    bracket = ")" if open_upper else "]"
    _require(ok, f"rate {cfg.rate} outside [0, {upper}{bracket}")


def _validate(cfg: RunConfig):
    _require(cfg.workers >= 1, f"workers must be >= 1, got {cfg.workers}")
    _require(cfg.format in FORMATS, f"format must be one of {FORMATS}, got {cfg.format!r}")
    _require(bool(cfg.out_dir), "out_dir must not be empty")
    antennas = cfg.antennas
    _require(cfg.delay >= 1, f"delay must be >= 1, got {cfg.delay}")
    _require(cfg.tilt is None or (cfg.tilt >= 0 and math.isfinite(cfg.tilt)),
             f"tilt must be >= 0, got {cfg.tilt}")
    _require(cfg.epsilon >= 0, f"epsilon must be >= 0, got {cfg.epsilon}")

    if cfg.subcommand == "curves":
        _require(0 < cfg.r_step <= antennas.min_dim,
                 f"r_step must lie in (0, {antennas.min_dim}] for a nonempty grid, got {cfg.r_step}")
        return

    if cfg.subcommand in ("outage", "scheme", "treesim"):
        _require(cfg.trials >= 1, f"trials must be >= 1, got {cfg.trials}")
        _validate_ladder(cfg)

    if cfg.subcommand == "outage":
        _validate_rate(cfg, antennas.min_dim)
    elif cfg.subcommand == "scheme":
        _require(cfg.scheme in SCHEMES, f"scheme must be one of {SCHEMES}, got {cfg.scheme!r}")
        if cfg.scheme == "interleave":
            _validate_rate(cfg, antennas.min_dim)
        else:
            _require(antennas.is_siso, f"scheme {cfg.scheme} is SISO only")
        if cfg.scheme == "prop1":
            _require(0 < cfg.rate < 1, f"prop1 needs rate in (0, 1), got {cfg.rate}")
            _require(cfg.prop1_event in PROP1_EVENTS,
                     f"prop1_event must be one of {PROP1_EVENTS}, got {cfg.prop1_event!r}")
            _require(cfg.tilt is None, "prop1 samples untilted, drop --tilt")
        if cfg.scheme == "naive":
            _validate_rate(cfg, 1.0)
    elif cfg.subcommand == "treesim":
        _require(cfg.horizon >= 1, f"horizon must be >= 1, got {cfg.horizon}")
        _validate_rate(cfg, antennas.min_dim, open_upper=True)
        _require(cfg.mf is None or cfg.mf > 0, f"mf must be > 0, got {cfg.mf}")
        _require(cfg.tilt is None, "treesim samples untilted, drop --tilt")
    elif cfg.subcommand == "audit":
        _validate_audit(cfg)


def _validate_audit(cfg: RunConfig):
    _require(cfg.check in AUDIT_CHECKS, f"check must be one of {AUDIT_CHECKS}, got {cfg.check!r}")
    _require(cfg.rate >= 0, f"rate must be >= 0, got {cfg.rate}")
    if cfg.check == "envelope":
        _require(cfg.n is None or cfg.n >= 0, f"n must be >= 0, got {cfg.n}")
        return
    _require(0 < cfg.delta < cfg.rate, f"delta must lie in (0, rate), got delta={cfg.delta}")
    if cfg.check in ("budget", "multicast", "fano"):
        _require(cfg.n is not None and cfg.n >= 1, f"check {cfg.check} needs n >= 1")
    if cfg.check == "fano":
        _require(cfg.n > cfg.delay, f"fano needs n > delay, got n={cfg.n}, delay={cfg.delay}")
    if cfg.check in ("multicast", "trace"):
        _require(cfg.rho_db > 0, f"rho_db must be > 0, got {cfg.rho_db}")
    if cfg.check == "trace":
        _require(cfg.delay == 2, f"trace needs delay 2, got {cfg.delay}")
        _require(bool(cfg.gains) and len(cfg.gains) >= 2, "trace needs at least two gains")
        _require(all(g >= 0 for g in cfg.gains), "gains must be nonnegative")
    if cfg.check == "hdelta":
        _require(cfg.antennas.is_siso, "hdelta check is SISO only")
        _require(cfg.trials >= 1, f"trials must be >= 1, got {cfg.trials}")
        _validate_ladder(cfg)
