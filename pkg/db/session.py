import logging
from contextlib import contextmanager
from typing import List, Optional

from sqlalchemy.orm import Session

from db import connection
from db.models import RunRecord

logger = logging.getLogger(__name__)


@contextmanager
def session_scope(factory=None):
    db = (factory or connection.SessionLocal)()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()


def record_run(db: Session, record: RunRecord) -> RunRecord:
    db.add(record)
    db.flush()
    logger.info(f"Recorded run {record.run_id} ({record.subcommand})")
    return record


def list_runs(db: Session, subcommand: Optional[str] = None, limit: int = 100) -> List[RunRecord]:
    query = db.query(RunRecord)
    if subcommand:
        query = query.filter(RunRecord.subcommand == subcommand)
    return query.order_by(RunRecord.created_at.desc()).limit(limit).all()


def get_run(db: Session, run_id: str) -> Optional[RunRecord]:
    return db.query(RunRecord).filter(RunRecord.run_id == run_id).first()
