from sqlalchemy import JSON, Column, DateTime, Float, Integer, String
from sqlalchemy.sql import func

from trendbands.database import Base
from trendbands.schemas import CoverageReport


class CoverageRecord(Base):
    __tablename__ = "coverage_reports"

    id = Column(Integer, primary_key=True, index=True)
    config_hash = Column(String(64), unique=True, index=True, nullable=False)
    label = Column(String(200), default="")
    seed = Column(String(20), nullable=False)  # unsigned 64-bit, kept as text
    config = Column(JSON, nullable=False)
    pointwise_coverage = Column(Float, nullable=False)
    simultaneous_coverage_gsub = Column(Float, nullable=False)
    simultaneous_coverage_g = Column(Float, nullable=False)
    median_length_pointwise = Column(Float, nullable=False)
    median_length_gsub = Column(Float, nullable=False)
    median_length_g = Column(Float, nullable=False)
    mc_reps = Column(Integer, nullable=False)
    completed_reps = Column(Integer, nullable=False)
    dropped_reps = Column(Integer, default=0)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    def to_report(self) -> CoverageReport:
        return CoverageReport(**{name: getattr(self, name) for name in CoverageReport.model_fields})
