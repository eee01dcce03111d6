from fastapi import APIRouter, Depends, HTTPException
from sqlalchemy.orm import Session

from db.connection import get_db
from db.session import get_run, list_runs

router = APIRouter(prefix="/runs", tags=["runs"])


@router.get("/")
def get_runs(subcommand: str = None, limit: int = 100, db: Session = Depends(get_db)):
    return [run.to_dict() for run in list_runs(db, subcommand, limit)]


@router.get("/{run_id}")
def get_run_by_id(run_id: str, db: Session = Depends(get_db)):
    run = get_run(db, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return run.to_dict()
