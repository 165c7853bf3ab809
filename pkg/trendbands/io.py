"""CSV ingestion and atomic table/metadata output."""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from trendbands.domain import Band, EvalGrid, ObservedSeries
from trendbands.exceptions import DataError
from trendbands.schemas import CsvSpec, RunMetadata
from trendbands.spectral import fractional_years

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def _column(frame: pd.DataFrame, key: Union[str, int], role: str) -> pd.Series:
    if isinstance(key, int):
        if not 0 <= key < frame.shape[1]:
            raise DataError(f"{role} column index {key} out of range (file has {frame.shape[1]} columns)")
        return frame.iloc[:, key]
    if key not in frame.columns:
        raise DataError(f"{role} column {key!r} not found; columns are {list(frame.columns)}")
    return frame[key]


def _first_bad(mask: np.ndarray, lines: np.ndarray) -> Tuple[int, int]:
    """Frame row and 1-based source line of the first flagged row."""
    row = int(np.flatnonzero(mask)[0])
    return row, int(lines[row])


def load_series(path: PathLike, spec: CsvSpec, periods_per_year: Optional[float] = None) -> ObservedSeries:
    """Read one row per period into a regularly spaced series.

    Gaps in the time column become missing rows. With a date format or period
    the time column is parsed as dates and ``ObservedSeries.time`` carries
    fractional years; with integer times it does so only when
    ``periods_per_year`` is given.
    """
    named = isinstance(spec.time_column, str) or isinstance(spec.value_column, str)
    try:
        frame = pd.read_csv(
            path,
            sep=spec.delimiter,
            header=0 if named else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    first_line = 2 if named else 1
    # blank lines stay in the frame until each row knows its source line
    blank = frame.fillna("").map(str.strip).eq("").all(axis=1).to_numpy()
    lines = first_line + np.flatnonzero(~blank)
    frame = frame[~blank].reset_index(drop=True).fillna("")
    if frame.empty:
        raise DataError(f"{path} holds no data rows")

    raw_values = _column(frame, spec.value_column, "value").str.strip()
    missing = raw_values.isin(spec.missing_tokens).to_numpy()
    values = pd.to_numeric(raw_values.where(~missing), errors="coerce").to_numpy(dtype=float)
    bad = ~missing & ~np.isfinite(values)
    if bad.any():
        row, line = _first_bad(bad, lines)
        raise DataError(f"value {raw_values.iloc[row]!r} is not a finite number", line=line)

    raw_times = _column(frame, spec.time_column, "time").str.strip()
    freq = spec.period or "D"
    if spec.uses_dates:
        try:
            dates = pd.to_datetime(raw_times, format=spec.date_format, errors="coerce")
        except (ValueError, TypeError) as exc:
            raise DataError(f"date format {spec.date_format!r} is unusable: {exc}") from exc
        bad = dates.isna().to_numpy()
        if bad.any():
            row, line = _first_bad(bad, lines)
            raise DataError(f"time {raw_times.iloc[row]!r} does not parse as a date", line=line)
        try:
            ordinals = pd.DatetimeIndex(dates).to_period(freq).asi8
        except (ValueError, TypeError) as exc:
            raise DataError(f"period {freq!r} is not a pandas frequency: {exc}") from exc
    else:
        numeric = pd.to_numeric(raw_times, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(numeric) | (numeric != np.round(numeric))
        if bad.any():
            row, line = _first_bad(bad, lines)
            raise DataError(f"time {raw_times.iloc[row]!r} is not an integer period", line=line)
        ordinals = numeric.astype(np.int64)

    steps = np.diff(ordinals)
    if np.any(steps <= 0):
        _, line = _first_bad(np.concatenate([[False], steps <= 0]), lines)
        raise DataError("time column must be strictly increasing", line=line)

    positions = ordinals - ordinals[0]
    n = int(positions[-1]) + 1
    full_values = np.full(n, np.nan)
    observed = np.zeros(n, dtype=bool)
    full_values[positions] = values
    observed[positions] = ~missing
    gaps = n - len(frame)
    if gaps:
        logger.info("filled %d gap rows in %s as missing", gaps, path)

    time = None
    all_ordinals = ordinals[0] + np.arange(n)
    if spec.uses_dates:
        stamps = pd.PeriodIndex.from_ordinals(all_ordinals, freq=freq).to_timestamp()
        time = fractional_years(stamps)
    elif periods_per_year is not None:
        time = all_ordinals / periods_per_year
    logger.info("loaded %s: n=%d, %d observed", path, n, int(observed.sum()))
    return ObservedSeries(values=full_values, observed=observed, time=time)


def write_table(frame: pd.DataFrame, path: PathLike, delimiter: str = ",") -> Path:
    """Write via a temporary sibling and rename, so readers never see half a file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        frame.to_csv(tmp, sep=delimiter, index=False, na_rep="", lineterminator="\n")
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def write_metadata(metadata: RunMetadata, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        tmp.write_text(json.dumps(metadata.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def read_metadata(path: PathLike) -> RunMetadata:
    try:
        return RunMetadata.model_validate_json(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read metadata {path}: {exc}") from exc


def band_frame(band: Band) -> pd.DataFrame:
    """Plot-data layout: tau, center, lower, upper, valid and alpha_s when simultaneous."""
    valid = np.asarray(band.valid, dtype=bool)
    frame = pd.DataFrame(
        {
            "tau": band.grid.points,
            "center": np.where(valid, band.center, np.nan),
            "lower": np.where(valid, band.lower, np.nan),
            "upper": np.where(valid, band.upper, np.nan),
            "valid": valid,
        }
    )
    if band.alpha_s is not None:
        frame["alpha_s"] = band.alpha_s
    return frame


def emit_plot_data(band: Band, path: PathLike, delimiter: str = ",") -> Path:
    return write_table(band_frame(band), path, delimiter)


def read_plot_data(path: PathLike, alpha: float, delimiter: str = ",") -> Band:
    """Inverse of ``emit_plot_data``; values round-trip exactly."""
    frame = pd.read_csv(path, sep=delimiter, float_precision="round_trip")
    valid = frame["valid"].to_numpy(dtype=bool)
    alpha_s = float(frame["alpha_s"].iloc[0]) if "alpha_s" in frame.columns and len(frame) else None
    return Band(
        grid=EvalGrid(frame["tau"].to_numpy(dtype=float)),
        center=frame["center"].to_numpy(dtype=float),
        lower=frame["lower"].to_numpy(dtype=float),
        upper=frame["upper"].to_numpy(dtype=float),
        alpha=alpha,
        valid=valid,
        alpha_s=alpha_s,
    )


class OutputSet:
    """Files written by one run; removed again if the run fails part-way."""

    def __init__(self, directory: PathLike):
        self.directory = Path(directory)
        self.paths: List[Path] = []

    def path(self, name: str) -> Path:
        return self.directory / name

    def table(self, frame: pd.DataFrame, name: str, delimiter: str = ",") -> Path:
        written = write_table(frame, self.path(name), delimiter)
        self.paths.append(written)
        return written

    def metadata(self, metadata: RunMetadata, name: str) -> Path:
        written = write_metadata(metadata, self.path(name))
        self.paths.append(written)
        return written

    def names(self) -> List[str]:
        return [p.name for p in self.paths]

    def discard(self, keep: Iterable[Path] = ()) -> None:
        """Remove every file written so far except those in ``keep``."""
        keep = set(keep)
        for path in self.paths:
            if path not in keep:
                path.unlink(missing_ok=True)
        self.paths = [p for p in self.paths if p in keep]
