import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


class Settings:
    LOG_LEVEL: str = os.getenv("TRENDBANDS_LOG_LEVEL", "INFO")
    WORKERS: int = int(os.getenv("TRENDBANDS_WORKERS", "1"))
    OUTPUT_DIR: str = os.getenv("TRENDBANDS_OUTPUT_DIR", "output")
    DEFAULT_SEED: int = int(os.getenv("TRENDBANDS_SEED", "20190701"))

    # unset means a SQLite file next to the outputs
    DATABASE_URL_OVERRIDE: str | None = os.getenv("TRENDBANDS_DATABASE_URL")

    def database_url_for(self, output_dir: str | os.PathLike | None = None) -> str:
        if self.DATABASE_URL_OVERRIDE:
            return self.DATABASE_URL_OVERRIDE
        directory = Path(output_dir or self.OUTPUT_DIR).resolve()
        return f"sqlite:///{directory / 'trendbands.db'}"

    @property
    def DATABASE_URL(self) -> str:
        return self.database_url_for()


settings = Settings()
