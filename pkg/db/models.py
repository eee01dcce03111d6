from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Float, Integer, String, Text

from .connection import Base


class RunRecord(Base):
    __tablename__ = "runs"

    run_id = Column(String, primary_key=True, index=True)
    subcommand = Column(String, nullable=False, index=True)
    seed = Column(Integer, nullable=True)
    version = Column(String, nullable=False)
    wall_time_s = Column(Float, nullable=False)
    out_dir = Column(String, nullable=False)
    config_json = Column(Text, nullable=False)
    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc), nullable=False)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "version": self.version,
            "wall_time_s": self.wall_time_s,
            "out_dir": self.out_dir,
            "config_json": self.config_json,
            "created_at": self.created_at.isoformat() if self.created_at else None,
        }
