from pathlib import Path
from typing import Dict, Optional
import logging

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine, make_url
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from trendbands.config import settings

logger = logging.getLogger(__name__)

Base = declarative_base()

_engines: Dict[str, Engine] = {}


def get_engine(url: Optional[str] = None) -> Engine:
    """One engine per database URL; SQLite files get their directory created."""
    url = url or settings.DATABASE_URL
    engine = _engines.get(url)
    if engine is None:
        parsed = make_url(url)
        if parsed.get_backend_name() == "sqlite" and parsed.database not in (None, "", ":memory:"):
            Path(parsed.database).parent.mkdir(parents=True, exist_ok=True)
        engine = create_engine(url, pool_pre_ping=True, echo=False)
        _engines[url] = engine
    return engine


def create_db_session(url: Optional[str] = None) -> Session:
    """New session on the results store; the caller closes it."""
    return sessionmaker(autocommit=False, autoflush=False, bind=get_engine(url))()


def create_tables(url: Optional[str] = None) -> None:
    # registers the mapped classes on Base.metadata
    from trendbands import models  # noqa: F401

    try:
        Base.metadata.create_all(bind=get_engine(url))
        logger.info("results store tables ready")
    except Exception as e:
        logger.error(f"creating results store tables failed: {str(e)}")
        raise
