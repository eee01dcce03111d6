import json

from fastapi import APIRouter, HTTPException, Query

from services.curve_export import breakpoints_record, curve_table
from services.dmt_analytic import AntennaConfig
from services.errors import DimensionError, DomainError

router = APIRouter(prefix="/curves", tags=["curves"])


def _antennas(nt: int, nr: int) -> AntennaConfig:
    try:
        return AntennaConfig(nt, nr)
    except DimensionError as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.get("/")
def get_curves(
    nt: int = Query(1),
    nr: int = Query(1),
    delay: int = Query(2),
    step: float = Query(0.05),
):
    cfg = _antennas(nt, nr)
    try:
        frame = curve_table(cfg, delay, step)
    except DomainError as e:
        raise HTTPException(status_code=400, detail=str(e))
    # to_json turns NaN cells (non-SISO columns) into null
    return json.loads(frame.to_json(orient="records", double_precision=15))


@router.get("/breakpoints")
def get_breakpoints(nt: int = Query(1), nr: int = Query(1)):
    return breakpoints_record(_antennas(nt, nr))
