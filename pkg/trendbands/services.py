from typing import List, Tuple
import logging

from sqlalchemy.orm import Session

from trendbands import crud, models
from trendbands.schemas import CoverageReport, SimulationConfig
from trendbands.simulation import monte_carlo_coverage

logger = logging.getLogger(__name__)


class CoverageStudyService:
    """Monte Carlo coverage runs backed by the results store.

    A configuration is identified by its hash; rerunning a stored
    configuration returns the stored report instead of recomputing it.
    """

    def __init__(self, db: Session):
        self.db = db

    def run(self, config: SimulationConfig, workers: int = 1, refresh: bool = False) -> Tuple[CoverageReport, bool]:
        """Returns the report and whether it came from the store."""
        key = config.config_hash()
        stored = crud.get_coverage_record(self.db, key)
        if stored is not None and not refresh:
            logger.info(f"reusing stored coverage report {key[:8]} ({stored.label or 'unlabelled'})")
            return stored.to_report(), True
        if stored is not None:
            crud.delete_coverage_record(self.db, key)

        report = monte_carlo_coverage(config, workers=workers)
        record = models.CoverageRecord(
            config_hash=key,
            label=config.label,
            seed=str(config.seed),
            config=config.model_dump(mode="json", by_alias=True),
            **report.model_dump(),
        )
        crud.create_coverage_record(self.db, record)
        logger.info(f"stored coverage report {key[:8]}")
        return report, False

    def list_reports(self, skip: int = 0, limit: int = 100) -> List[models.CoverageRecord]:
        return crud.get_coverage_records(self.db, skip=skip, limit=limit)
