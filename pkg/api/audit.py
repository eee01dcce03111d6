from typing import List, Optional

from fastapi import APIRouter, HTTPException, Query
from pydantic import BaseModel

from services.converse_audit import (
    AmplificationScenario,
    amplification_threshold,
    amplification_trace,
    fano_lower_bound,
    format_trace,
    multicast_bracket,
    multicast_threshold,
    siso_budget_check,
    simple_bound_envelope,
)
from services.dmt_analytic import AntennaConfig
from services.errors import DimensionError, DomainError
from services.mimo_channel import snr_db_to_linear

router = APIRouter(prefix="/audit", tags=["audit"])


class TraceRequest(BaseModel):
    r: float
    delta: float
    rho_db: float
    gains: List[float]
    T: int = 2


def _guard(fn, *args):
    try:
        return fn(*args)
    except (DomainError, DimensionError) as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.get("/threshold")
def get_threshold(T: int = Query(2), r: float = Query(0.5), delta: float = Query(0.1)):
    return _guard(amplification_threshold, T, r, delta).to_dict()


@router.get("/budget")
def get_budget(r: float = Query(0.5), delta: float = Query(0.1), N: int = Query(...)):
    return _guard(siso_budget_check, r, delta, N).to_dict()


@router.get("/envelope")
def get_envelope(r: float = Query(0.5), n_max: int = Query(50)):
    envelope, argmin = _guard(simple_bound_envelope, r, n_max)
    return {"envelope": envelope, "argmin_N": argmin}


@router.get("/multicast")
def get_multicast(r: float = Query(0.5), delta: float = Query(0.1),
                  rho_db: float = Query(60.0), N: Optional[int] = Query(None)):
    rho = snr_db_to_linear(rho_db)
    result = {"N_min_positive": _guard(multicast_threshold, r, delta, rho)}
    if N is not None:
        result["bracket"] = _guard(multicast_bracket, r, delta, rho, N)
    return result


@router.get("/fano")
def get_fano(nt: int = Query(1), nr: int = Query(1), T: int = Query(2),
             r: float = Query(0.5), delta: float = Query(0.1), N: int = Query(...)):
    cfg = _guard(AntennaConfig, nt, nr)
    return _guard(fano_lower_bound, cfg, T, r, delta, N).to_dict()


@router.post("/trace")
def post_trace(req: TraceRequest):
    scenario = _guard(AmplificationScenario, req.r, req.delta, req.T,
                      snr_db_to_linear(req.rho_db), tuple(req.gains))
    report = _guard(amplification_trace, scenario)
    result = report.to_dict()
    result["table"] = format_trace(report)
    return result
