from typing import List, Optional

from sqlalchemy.orm import Session

from trendbands import models


def get_coverage_records(db: Session, skip: int = 0, limit: int = 100) -> List[models.CoverageRecord]:
    return db.query(models.CoverageRecord).order_by(models.CoverageRecord.id).offset(skip).limit(limit).all()


def get_coverage_record(db: Session, config_hash: str) -> Optional[models.CoverageRecord]:
    return db.query(models.CoverageRecord).filter(models.CoverageRecord.config_hash == config_hash).first()


def create_coverage_record(db: Session, record: models.CoverageRecord) -> models.CoverageRecord:
    db.add(record)
    db.commit()
    db.refresh(record)
    return record


def delete_coverage_record(db: Session, config_hash: str) -> bool:
    record = get_coverage_record(db, config_hash)
    if record is None:
        return False
    db.delete(record)
    db.commit()
    return True
