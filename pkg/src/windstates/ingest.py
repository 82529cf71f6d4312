"""Raw sensor ingestion: grid resampling, epoch segmentation, validity gating.

Raw per-turbine streams arrive at an irregular cadence (roughly 5 s in the
field). Everything downstream works on a fixed grid (default 10 s) where each
cell is the mean of the raw samples falling into it and empty cells stay
missing. Grids are cut into disjoint fixed-length epochs; any grid timestamp
with at least one missing channel is dropped from its epoch, and an epoch is
valid only if enough complete timestamps remain.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, UsageError

log = logging.getLogger(__name__)

DEFAULT_SIGNALS = ("ActivePower", "CurrentL1", "RotorRPM", "GeneratorRPM", "WindSpeed")
WIND_CHANNEL = "WindSpeed"

DEFAULT_GRID_SECONDS = 10.0
DEFAULT_EPOCH_LENGTH = 180
DEFAULT_MIN_POINTS = 90


@dataclass(eq=False)
class SignalGrid:
    """Fixed-cadence multivariate series for one turbine.

    ``values`` is a K x T float array, one row per channel in ``signals``
    order; missing cells are NaN. Cell i covers [start + i*step,
    start + (i+1)*step). Treated as immutable after construction.
    """

    turbine_id: str
    grid_step: float
    signals: tuple[str, ...]
    start: float
    values: np.ndarray
    units: tuple[str, ...] | None = None
    skipped_rows: int = 0
    skipped_lines: tuple[int, ...] = ()

    def __post_init__(self):
        if self.grid_step <= 0:
            raise UsageError("grid_step must be positive")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.signals):
            raise UsageError(
                f"values must be ({len(self.signals)}, T), got {self.values.shape}"
            )

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]

    @property
    def timestamps(self) -> np.ndarray:
        return self.start + self.grid_step * np.arange(self.n_cells)

    def complete_mask(self) -> np.ndarray:
        """True at cells where every channel is present."""
        return ~np.isnan(self.values).any(axis=0)


@dataclass(eq=False)
class EpochMatrix:
    """One epoch of a grid, reduced to its complete timestamps.

    ``rows`` holds only the columns where all K channels were present
    (valid_count of them); ``epoch_length`` is the nominal number of grid
    cells the epoch spans.
    """

    turbine_id: str
    epoch_start: float
    signals: tuple[str, ...]
    rows: np.ndarray
    valid_count: int
    epoch_length: int
    min_points: int = DEFAULT_MIN_POINTS

    @property
    def is_valid(self) -> bool:
        return self.valid_count >= self.min_points

    def channel_index(self, name: str) -> int:
        try:
            return self.signals.index(name)
        except ValueError:
            raise UsageError(f"unknown channel {name!r}") from None

    def channel_mean(self, name: str) -> float:
        """Mean of one channel over the retained timestamps (NaN if none)."""
        if self.valid_count == 0:
            return float("nan")
        return float(np.mean(self.rows[self.channel_index(name)]))


@dataclass
class EpochSummary:
    turbine_id: str
    epoch_start: float
    mean_wind_speed: float
    valid_count: int
    valid: bool


def _cell_means(
    ts: np.ndarray, values: np.ndarray, grid_step: float
) -> tuple[float, np.ndarray]:
    """Bin samples into half-open grid cells and average per cell.

    ``values`` is (K, n) aligned with ``ts``; NaN entries mean the sample
    carries no value for that channel. Returns (grid start, K x T means with
    NaN for empty cells).
    """
    start = math.floor(ts.min() / grid_step) * grid_step
    idx = np.floor((ts - start) / grid_step).astype(np.int64)
    n_cells = int(idx.max()) + 1
    out = np.full((values.shape[0], n_cells), np.nan)
    for k in range(values.shape[0]):
        present = ~np.isnan(values[k])
        if not present.any():
            continue
        sums = np.bincount(idx[present], weights=values[k][present], minlength=n_cells)
        counts = np.bincount(idx[present], minlength=n_cells)
        filled = counts > 0
        out[k, filled] = sums[filled] / counts[filled]
    return start, out


def resample_to_grid(
    raw: Iterable[tuple[float, str, float]],
    grid_step: float = DEFAULT_GRID_SECONDS,
    turbine_id: str = "",
    signals: Sequence[str] | None = None,
) -> SignalGrid:
    """Average raw (timestamp, channel, value) samples onto a fixed grid.

    Each grid cell holds the arithmetic mean of the samples whose timestamp
    falls in [cell_start, cell_start + grid_step); cells without samples stay
    missing. The grid covers the full sampled span contiguously. Channel
    order follows ``signals`` when given, else first appearance.
    """
    if grid_step <= 0:
        raise UsageError("grid_step must be positive")
    rows = list(raw)
    if not rows:
        raise DataError("no raw samples to resample")

    if signals is None:
        order: list[str] = []
        for _, channel, _ in rows:
            if channel not in order:
                order.append(channel)
    else:
        order = list(signals)
    chan_idx = {c: i for i, c in enumerate(order)}

    ts = np.array([float(t) for t, _, _ in rows])
    values = np.full((len(order), len(rows)), np.nan)
    for j, (_, channel, value) in enumerate(rows):
        k = chan_idx.get(channel)
        if k is None:
            raise UsageError(f"sample for unknown channel {channel!r}")
        values[k, j] = float(value)

    start, cells = _cell_means(ts, values, grid_step)
    return SignalGrid(
        turbine_id=turbine_id,
        grid_step=float(grid_step),
        signals=tuple(order),
        start=start,
        values=cells,
    )


def _parse_timestamps(raw: pd.Series) -> np.ndarray:
    """Parse a string column as epoch seconds, accepting ISO-8601; NaN if bad."""
    ts = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = np.isnan(ts)
    if bad.any():
        iso = pd.to_datetime(raw[bad], errors="coerce", utc=True, format="ISO8601")
        ok = iso.notna().to_numpy()
        parsed = np.full(ok.shape, np.nan)
        parsed[ok] = iso[ok].astype("int64").to_numpy() / 1e9
        ts[bad] = parsed
    return ts


def read_turbine_csv(
    path: str | Path,
    signals: Sequence[str] = DEFAULT_SIGNALS,
    grid_step: float = DEFAULT_GRID_SECONDS,
) -> SignalGrid:
    """Read one turbine CSV and resample it onto the grid.

    Expected header: ``timestamp`` plus the configured signal columns.
    Timestamps are ISO-8601 or integer epoch seconds; an empty field is a
    missing value. Rows that fail to parse are skipped and counted
    (``skipped_rows`` / ``skipped_lines`` on the result); the file stem
    becomes the turbine id.
    """
    path = Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if frame.empty:
        raise DataError(f"{path.name}: no data rows")
    missing_cols = [c for c in ("timestamp", *signals) if c not in frame.columns]
    if missing_cols:
        raise DataError(f"{path.name}: missing columns {missing_cols}")

    ts = _parse_timestamps(frame["timestamp"])
    bad = np.isnan(ts)
    values = np.empty((len(signals), len(frame)))
    for k, name in enumerate(signals):
        col = frame[name]
        parsed = pd.to_numeric(col, errors="coerce")
        # empty field = legitimately missing; non-empty that fails to parse
        # invalidates the whole row
        bad |= (parsed.isna() & (col.str.strip() != "")).to_numpy()
        values[k] = parsed.to_numpy(dtype=float)

    n_bad = int(bad.sum())
    skipped_lines: tuple[int, ...] = ()
    if n_bad:
        # +2: header line plus 1-based numbering
        lines = np.flatnonzero(bad) + 2
        skipped_lines = tuple(int(x) for x in lines[:20])
        log.warning("%s: skipped %d unparseable rows (lines %s%s)",
                    path.name, n_bad, ", ".join(map(str, skipped_lines)),
                    ", ..." if n_bad > len(skipped_lines) else "")
        ts, values = ts[~bad], values[:, ~bad]
    if ts.size == 0:
        raise DataError(f"{path.name}: no parseable rows")

    start, cells = _cell_means(ts, values, grid_step)
    return SignalGrid(
        turbine_id=path.stem,
        grid_step=float(grid_step),
        signals=tuple(signals),
        start=start,
        values=cells,
        skipped_rows=n_bad,
        skipped_lines=skipped_lines,
    )


def segment_epochs(
    grid: SignalGrid,
    epoch_length: int = DEFAULT_EPOCH_LENGTH,
    min_points: int = DEFAULT_MIN_POINTS,
) -> list[EpochMatrix]:
    """Cut a grid into disjoint consecutive epochs aligned to the grid start.

    Timestamps missing any channel are dropped from their epoch. A trailing
    partial window is kept so that the per-epoch valid counts sum to the
    number of complete timestamps in the grid.
    """
    if epoch_length < 2:
        raise UsageError("epoch_length must be at least 2")
    if grid.n_cells == 0:
        raise DataError("empty grid")
    epochs = []
    n_epochs = math.ceil(grid.n_cells / epoch_length)
    for e in range(n_epochs):
        cols = grid.values[:, e * epoch_length : (e + 1) * epoch_length]
        complete = ~np.isnan(cols).any(axis=0)
        rows = cols[:, complete].copy()
        epochs.append(
            EpochMatrix(
                turbine_id=grid.turbine_id,
                epoch_start=grid.start + e * epoch_length * grid.grid_step,
                signals=grid.signals,
                rows=rows,
                valid_count=int(complete.sum()),
                epoch_length=epoch_length,
                min_points=min_points,
            )
        )
    return epochs


def epoch_summary(
    epochs: Sequence[EpochMatrix], wind_channel: str = WIND_CHANNEL
) -> list[EpochSummary]:
    """Per-epoch mean wind speed, valid count and validity flag."""
    if not epochs:
        raise DataError("no epochs to summarize")
    return [
        EpochSummary(
            turbine_id=ep.turbine_id,
            epoch_start=ep.epoch_start,
            mean_wind_speed=ep.channel_mean(wind_channel),
            valid_count=ep.valid_count,
            valid=ep.is_valid,
        )
        for ep in epochs
    ]
