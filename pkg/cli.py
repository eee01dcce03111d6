import argparse
import json
import logging
import sys
import time
import uuid
from typing import Callable, Dict, List, Optional

import pandas as pd

from config import OUT_DIR, WORKERS, describe_version, load_run_file, setup_logging
from services.converse_audit import (
    AmplificationScenario,
    amplification_threshold,
    amplification_trace,
    fano_lower_bound,
    format_trace,
    hdelta_event,
    hdelta_product_probability,
    multicast_bracket,
    multicast_threshold,
    siso_budget_check,
    simple_bound_envelope,
)
from services.curve_export import breakpoints_record, curve_table
from services.dmt_analytic import (
    SISO,
    d1,
    prop1_first_exponent,
    prop1_second_exponent,
    streaming_dmt,
    treecode_lag_bound,
    treecode_lag_exponent,
)
from services.errors import ConfigError
from services.mimo_channel import RngSpec, snr_db_to_linear
from services.outage_mc import (
    OutageSimulator,
    TiltSpec,
    default_tilt,
    estimate_outage,
    estimates_frame,
    run_ladder,
    single_link_outage_event,
)
from services.run_config import RunConfig, build_run_config
from services.run_writer import RunWriter
from services.stream_schemes import (
    StreamSpec,
    fit_per_k,
    interleave_sim,
    naive_scheme_sim,
    prop1_sim,
    treecode_decode_sim,
)

logger = logging.getLogger(__name__)

# Configuration
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
ENVELOPE_N_MAX = 50
TREESIM_CSV_COLUMNS = ["snr_db", "k", "trials", "errors", "p_hat", "ci_lo", "ci_hi"]


def _stage_table(writer: RunWriter, stem: str, frame: pd.DataFrame, fmt: str):
    if fmt == "json":
        records = json.loads(frame.to_json(orient="records", double_precision=15))
        writer.stage_json(f"{stem}.json", records)
    else:
        writer.stage_csv(f"{stem}.csv", frame)


def _tilt_for(cfg: RunConfig, n_blocks: int) -> TiltSpec:
    if cfg.tilt is not None:
        return TiltSpec(cfg.tilt)
    return default_tilt(cfg.rate, cfg.nr, cfg.nt, n_blocks)


def cmd_curves(cfg: RunConfig, writer: RunWriter) -> Dict:
    antennas = cfg.antennas
    frame = curve_table(antennas, cfg.delay, cfg.r_step)
    _stage_table(writer, "curves", frame, cfg.format)
    writer.stage_json("breakpoints.json", breakpoints_record(antennas))
    return {"rows": len(frame)}


def cmd_outage(cfg: RunConfig, writer: RunWriter) -> Dict:
    simulator = OutageSimulator(workers=cfg.workers)
    result = run_ladder(
        single_link_outage_event(cfg.rate), cfg.ladder, cfg.trials, RngSpec(cfg.seed),
        nr=cfg.nr, nt=cfg.nt, n_blocks=1, tilt=_tilt_for(cfg, 1), simulator=simulator,
    )
    fit = result.summary()
    fit["theory"] = d1(cfg.antennas, cfg.rate)
    _stage_table(writer, "outage", estimates_frame(result.estimates), cfg.format)
    writer.stage_json("fit.json", fit)
    return {"slope": fit["slope"]}


def _scheme_theory(cfg: RunConfig) -> float:
    if cfg.scheme == "interleave":
        return streaming_dmt(cfg.delay, cfg.antennas, cfg.rate)
    if cfg.scheme == "naive":
        return 1.0 - cfg.rate
    first = prop1_first_exponent(cfg.rate, cfg.beta)
    second = prop1_second_exponent(cfg.rate, cfg.beta)
    return {"first": first, "second": second}.get(cfg.prop1_event, min(first, second))


def cmd_scheme(cfg: RunConfig, writer: RunWriter) -> Dict:
    rng = RngSpec(cfg.seed)
    simulator = OutageSimulator(workers=cfg.workers)
    if cfg.scheme == "interleave":
        spec = StreamSpec(cfg.antennas, cfg.delay, cfg.rate, cfg.epsilon)
        tilt = TiltSpec(cfg.tilt) if cfg.tilt is not None else None
        result = interleave_sim(spec, cfg.ladder, cfg.trials, rng, tilt=tilt, simulator=simulator)
    elif cfg.scheme == "prop1":
        result = prop1_sim(cfg.ladder, cfg.rate, cfg.trials, rng, beta=cfg.beta,
                           event=cfg.prop1_event, simulator=simulator)
    else:
        tilt = TiltSpec(cfg.tilt) if cfg.tilt is not None else None
        result = naive_scheme_sim(cfg.ladder, cfg.rate, cfg.trials, rng, tilt=tilt, simulator=simulator)
    fit = result.summary()
    fit["scheme"] = cfg.scheme
    fit["theory"] = _scheme_theory(cfg)
    _stage_table(writer, "scheme", estimates_frame(result.estimates), cfg.format)
    writer.stage_json("fit.json", fit)
    return {"slope": fit["slope"]}


def cmd_treesim(cfg: RunConfig, writer: RunWriter) -> Dict:
    spec = StreamSpec(cfg.antennas, cfg.delay, cfg.rate, cfg.epsilon)
    reports = treecode_decode_sim(spec, cfg.horizon, cfg.ladder, cfg.trials, RngSpec(cfg.seed),
                                  atypicality_mf=cfg.mf, workers=cfg.workers)
    rows = []
    for rep in reports:
        for k, est in enumerate(rep.per_k_error):
            rows.append({"snr_db": rep.snr_db, "k": k, "trials": est.trials, "errors": est.hits,
                         "p_hat": est.p_hat, "ci_lo": est.ci_lo, "ci_hi": est.ci_hi})
    _stage_table(writer, "treesim_per_k", pd.DataFrame(rows, columns=TREESIM_CSV_COLUMNS), cfg.format)
    writer.stage_json("treesim.json", [rep.to_dict() for rep in reports])

    fits = fit_per_k(reports, cfg.ladder)
    writer.stage_json("fit.json", {
        "theory": streaming_dmt(cfg.delay, cfg.antennas, cfg.rate),
        "per_k": [dict(f.summary(), k=k) for k, f in enumerate(fits)],
        "lag_exponents": [
            {"lag": lag,
             "exponent": treecode_lag_exponent(cfg.antennas, cfg.delay, cfg.rate, lag, cfg.epsilon),
             "bound": treecode_lag_bound(cfg.antennas, cfg.delay, cfg.rate, lag)}
            for lag in range(cfg.horizon)
        ],
    })
    return {"rungs": len(reports)}


def _audit_payload(cfg: RunConfig, writer: RunWriter) -> Dict:
    check = cfg.check
    if check == "threshold":
        return amplification_threshold(cfg.delay, cfg.rate, cfg.delta).to_dict()
    if check == "budget":
        return siso_budget_check(cfg.rate, cfg.delta, cfg.n).to_dict()
    if check == "trace":
        scenario = AmplificationScenario(cfg.rate, cfg.delta, cfg.delay,
                                         snr_db_to_linear(cfg.rho_db), tuple(cfg.gains))
        report = amplification_trace(scenario)
        writer.stage_text("trace.txt", format_trace(report))
        return report.to_dict()
    if check == "envelope":
        n_max = ENVELOPE_N_MAX if cfg.n is None else cfg.n
        envelope, argmin = simple_bound_envelope(cfg.rate, n_max)
        payload = {"envelope": envelope, "argmin_N": argmin, "N_max": n_max}
        if cfg.rate <= 1:
            payload["streaming_dmt"] = streaming_dmt(2, SISO, cfg.rate)
        return payload
    if check == "multicast":
        rho = snr_db_to_linear(cfg.rho_db)
        return {
            "bracket": multicast_bracket(cfg.rate, cfg.delta, rho, cfg.n),
            "N_min_positive": multicast_threshold(cfg.rate, cfg.delta, rho),
        }
    if check == "fano":
        return fano_lower_bound(cfg.antennas, cfg.delay, cfg.rate, cfg.delta, cfg.n).to_dict()

    # hdelta: closed-form product probability against Monte Carlo, per rung
    rng = RngSpec(cfg.seed)
    simulator = OutageSimulator(workers=cfg.workers)
    event = hdelta_event(cfg.rate, cfg.delta)
    rows = []
    for i, (snr_db, rho) in enumerate(zip(cfg.ladder.points_db, cfg.ladder.rhos)):
        est = estimate_outage(event, 1, 1, cfg.delay, rho, cfg.trials, TiltSpec(0.0),
                              rng.child(i), simulator=simulator)
        rows.append({"snr_db": snr_db, "closed_form": hdelta_product_probability(rho, cfg.rate, cfg.delta, cfg.delay),
                     "p_hat": est.p_hat, "ci_lo": est.ci_lo, "ci_hi": est.ci_hi, "trials": est.trials})
    return {"rungs": rows}


def cmd_audit(cfg: RunConfig, writer: RunWriter) -> Dict:
    payload = _audit_payload(cfg, writer)
    payload["check"] = cfg.check
    writer.stage_json("audit.json", payload)
    return {"check": cfg.check}


COMMANDS: Dict[str, Callable[[RunConfig, RunWriter], Dict]] = {
    "curves": cmd_curves,
    "outage": cmd_outage,
    "scheme": cmd_scheme,
    "treesim": cmd_treesim,
    "audit": cmd_audit,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="KEY=value run file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--snr-start-db", type=float)
    common.add_argument("--snr-stop-db", type=float)
    common.add_argument("--snr-step-db", type=float)
    common.add_argument("--nt", type=int)
    common.add_argument("--nr", type=int)
    common.add_argument("--delay", type=int)
    common.add_argument("--rate", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--tilt", type=float)
    common.add_argument("--out-dir")
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--record", action="store_const", const=True,
                        help="insert the run into the registry database")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="streamdmt", description="Streaming DMT experiments")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("curves", parents=[common], help="analytic DMT curves")
    p.add_argument("--r-step", type=float)

    sub.add_parser("outage", parents=[common], help="single-link outage ladder")

    p = sub.add_parser("scheme", parents=[common], help="streaming scheme outage ladder")
    p.add_argument("--scheme", choices=["interleave", "prop1", "naive"])
    p.add_argument("--prop1-event", choices=["union", "first", "second"])
    p.add_argument("--beta", type=float)

    p = sub.add_parser("treesim", parents=[common], help="tree-code decoder simulation")
    p.add_argument("--horizon", type=int)
    p.add_argument("--mf", type=float, help="M*f of the synthetic atypicality failures")

    p = sub.add_parser("audit", parents=[common], help="converse arithmetic")
    p.add_argument("--check", choices=["threshold", "budget", "trace", "envelope",
                                       "multicast", "fano", "hdelta"])
    p.add_argument("--delta", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--rho-db", type=float)
    p.add_argument("--gains", type=float, nargs="+")
    return parser


def _record(cfg: RunConfig, summary: Dict):
    from db.connection import init_db
    from db.models import RunRecord
    from db.session import record_run, session_scope

    init_db()
    with session_scope() as db:
        record_run(db, RunRecord(
            run_id=summary["run_id"],
            subcommand=cfg.subcommand,
            seed=cfg.seed,
            version=summary["version"],
            wall_time_s=summary["wall_time_s"],
            out_dir=cfg.out_dir,
            config_json=json.dumps(summary["config"], sort_keys=True),
        ))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose", "subcommand")}
    if flags.get("workers") is None:
        flags["workers"] = WORKERS
    try:
        file_values = load_run_file(args.config) if args.config else {}
        cfg = build_run_config(args.subcommand, flags, file_values,
                               out_dir_default=OUT_DIR, config_file=args.config)
    except (ConfigError, FileNotFoundError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    started = time.perf_counter()
    writer = RunWriter(cfg.out_dir)
    try:
        result = COMMANDS[cfg.subcommand](cfg, writer)
        summary = {
            "run_id": uuid.uuid4().hex,
            "subcommand": cfg.subcommand,
            "seed": cfg.seed,
            "version": describe_version(),
            "wall_time_s": round(time.perf_counter() - started, 6),
            "config": cfg.echo(),
            "result": result,
            "outputs": writer.staged,
        }
        writer.stage_json("summary.json", summary)
        writer.commit()
        if cfg.record:
            _record(cfg, summary)
    except Exception as e:
        logger.error(f"{cfg.subcommand} failed: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        return EXIT_RUNTIME
    logger.info(f"{cfg.subcommand} finished in {summary['wall_time_s']:.2f}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
