"""CSV ingestion of daily prices (or precomputed returns) into log-return series."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from errors import ParseError, TooShort

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReturnSeries:
    dates: pd.DatetimeIndex
    returns: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.returns):
            raise ValueError(f"{len(self.dates)} dates for {len(self.returns)} returns")
        if self.dates.has_duplicates or not self.dates.is_monotonic_increasing:
            raise ValueError("Dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.returns)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": self.dates.strftime("%Y-%m-%d"), "return": self.returns})


def ingest_prices(path, date_column: str = "date", value_column: str = "price",
                  kind: str = "price") -> ReturnSeries:
    """Read a dated CSV and return log-returns r_t = ln(P_t / P_{t-1}).

    kind="return" takes the value column as precomputed returns instead.
    Malformed rows raise ParseError with the 1-based data row number.
    """
    path = Path(path)
    if kind not in ("price", "return"):
        raise ValueError(f"Unknown input kind '{kind}'")
    frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    for column in (date_column, value_column):
        if column not in frame.columns:
            raise ParseError(path, 0, column, None, reason="missing column")

    dates = pd.to_datetime(frame[date_column], errors="coerce")
    if dates.isna().any():
        row = int(np.flatnonzero(dates.isna().to_numpy())[0])
        raise ParseError(path, row + 1, date_column, frame[date_column].iloc[row])

    values = pd.to_numeric(frame[value_column], errors="coerce")
    invalid = values.isna() | ~np.isfinite(values)
    if kind == "price":
        invalid |= values <= 0
    if invalid.any():
        row = int(np.flatnonzero(invalid.to_numpy())[0])
        raise ParseError(path, row + 1, value_column, frame[value_column].iloc[row])

    data = pd.DataFrame({"date": dates, "value": values.astype(float)}).sort_values("date", kind="stable")
    if data["date"].duplicated().any():
        duplicate = data.loc[data["date"].duplicated(), "date"].iloc[0]
        row = int(np.flatnonzero((dates == duplicate).to_numpy())[-1])
        raise ParseError(path, row + 1, date_column, frame[date_column].iloc[row], reason="duplicate date")

    if kind == "price":
        if len(data) < 2:
            raise TooShort(f"{path}: need at least 2 prices, got {len(data)}")
        returns = np.diff(np.log(data["value"].to_numpy()))
        result_dates = pd.DatetimeIndex(data["date"].iloc[1:])
    else:
        if len(data) < 1:
            raise TooShort(f"{path}: no returns")
        returns = data["value"].to_numpy()
        result_dates = pd.DatetimeIndex(data["date"])
    logger.info("Loaded %d returns from %s", len(returns), path)
    return ReturnSeries(result_dates, returns)


def load_series(path, column: str = "value") -> np.ndarray:
    """Read an undated numeric series (e.g. written by the simulate subcommand)."""
    path = Path(path)
    frame = pd.read_csv(path, dtype=str)
    if column not in frame.columns:
        raise ParseError(path, 0, column, None, reason="missing column")
    values = pd.to_numeric(frame[column], errors="coerce")
    invalid = values.isna() | ~np.isfinite(values)
    if invalid.any():
        row = int(np.flatnonzero(invalid.to_numpy())[0])
        raise ParseError(path, row + 1, column, frame[column].iloc[row])
    return values.to_numpy(dtype=float)
