"""
Results store using SQLAlchemy: one row per simulation run plus its phase
summaries, queried back into pandas for cross-seed aggregation.
"""
import logging
import os
from datetime import datetime
from typing import Any, Dict, Mapping, Optional, Sequence

import pandas as pd
from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, create_engine, text
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, relationship, sessionmaker

from metrics import PhaseFlowSummary

logger = logging.getLogger(__name__)

DB_NAME = "results.db"

# Create base class for SQLAlchemy models
Base = declarative_base()

_engines: Dict[str, Engine] = {}


class RunModel(Base):
    """One (scenario, seed, algorithm) cell."""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    algorithm = Column(String, nullable=False)
    seed = Column(Integer, nullable=False)
    horizon = Column(Integer, nullable=False)
    substrate = Column(String, nullable=False)
    generated = Column(Integer, nullable=False)
    active_at_horizon = Column(Integer, nullable=False)
    buffered_at_horizon = Column(Integer, nullable=False)
    out_dir = Column(String, nullable=True)
    created = Column(DateTime, default=datetime.utcnow)

    phases = relationship("PhaseMetricModel", back_populates="run", cascade="all, delete-orphan")


class PhaseMetricModel(Base):
    """One phase summary row of a run (a flow, an operator, a service or ``all``)."""
    __tablename__ = "phase_metrics"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    phase = Column(String, nullable=False)
    operator = Column(String, nullable=False)
    service = Column(String, nullable=False)
    rounds = Column(Integer, nullable=False)
    arrived_mass = Column(Integer, nullable=False)
    rejected_mass = Column(Integer, nullable=False)
    preempted_mass = Column(Integer, nullable=False)
    resolved_mass = Column(Integer, nullable=False)
    rejection_rate = Column(Float, nullable=True)
    preemption_rate = Column(Float, nullable=True)
    mean_occupancy = Column(Float, nullable=False)
    served_share = Column(Float, nullable=True)
    requested_share = Column(Float, nullable=True)

    run = relationship("RunModel", back_populates="phases")

    def to_pydantic(self) -> PhaseFlowSummary:
        return PhaseFlowSummary.model_validate(self, from_attributes=True)


def get_engine(db_path: str) -> Engine:
    path = os.path.abspath(db_path)
    engine = _engines.get(path)
    if engine is None:
        engine = create_engine(f"sqlite:///{path}")
        _engines[path] = engine
    return engine


def dispose_engine(db_path: str) -> None:
    """Close pooled connections to a database file that is about to be replaced."""
    engine = _engines.pop(os.path.abspath(db_path), None)
    if engine is not None:
        engine.dispose()


def init_db(db_path: str) -> None:
    """Initialize the database and create tables if they don't exist."""
    Base.metadata.create_all(bind=get_engine(db_path))
    logger.info(f"Results database initialized at {os.path.abspath(db_path)}")


def get_db_session(db_path: str) -> Session:
    """Get a new database session."""
    return sessionmaker(autocommit=False, autoflush=False, bind=get_engine(db_path))()


def store_run(db_path: str, meta: Mapping[str, Any], summaries: Sequence[PhaseFlowSummary],
              out_dir: Optional[str] = None) -> int:
    """
    Persist one run and its phase summaries.

    Args:
        db_path: SQLite file
        meta: run metadata as produced by ``hypervisor.run``
        summaries: phase summaries of the run
        out_dir: where the run's own files were written

    Returns:
        ID of the new run row
    """
    db = get_db_session(db_path)
    try:
        run = RunModel(
            algorithm=str(meta["algorithm"]),
            seed=int(meta["seed"]),
            horizon=int(meta["horizon"]),
            substrate=str(meta["substrate"]),
            generated=int(meta["generated"]),
            active_at_horizon=int(meta["active_at_horizon"]),
            buffered_at_horizon=int(meta["buffered_at_horizon"]),
            out_dir=out_dir,
        )
        run.phases = [PhaseMetricModel(**s.model_dump()) for s in summaries]
        db.add(run)
        db.commit()
        db.refresh(run)
        logger.debug(f"Stored run {run.id} ({run.algorithm}, seed {run.seed}) with {len(summaries)} phase rows")
        return run.id
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()


def load_phase_frame(db_path: str) -> pd.DataFrame:
    """All phase rows joined with their run's algorithm and seed, ordered by algorithm, seed and insertion."""
    query = (
        "SELECT r.algorithm, r.seed, p.phase, p.operator, p.service, p.rounds, p.arrived_mass, "
        "p.rejected_mass, p.preempted_mass, p.resolved_mass, p.rejection_rate, p.preemption_rate, "
        "p.mean_occupancy, p.served_share, p.requested_share "
        "FROM phase_metrics p JOIN runs r ON p.run_id = r.id "
        "ORDER BY r.algorithm, r.seed, p.id"
    )
    with get_engine(db_path).connect() as conn:
        return pd.read_sql_query(text(query), conn)
