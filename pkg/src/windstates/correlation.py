"""Epoch normalization and Pearson correlation matrices.

Each valid epoch is normalized channel-wise to zero mean and unit standard
deviation (population convention, divisor T') and the correlation matrix is
the cross product of the normalized rows divided by T'. Channels whose
standard deviation is effectively zero (a controller pinning a signal) are
flagged degenerate: their normalized row is all zeros, which yields zero
off-diagonal correlations; the diagonal is set to one by convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .ingest import EpochMatrix

DEFAULT_EPS_DEGENERATE = 1e-12


@dataclass(eq=False)
class CorrelationMatrix:
    """K x K Pearson matrix for one epoch, with provenance metadata."""

    turbine_id: str
    epoch_start: float
    signals: tuple[str, ...]
    entries: np.ndarray
    degenerate_channels: frozenset[int] = frozenset()

    @property
    def n_channels(self) -> int:
        return self.entries.shape[0]

    def value(self, channel_a: str, channel_b: str) -> float:
        i = self.signals.index(channel_a)
        j = self.signals.index(channel_b)
        return float(self.entries[i, j])


def normalize_epoch(
    epoch: EpochMatrix, eps_degenerate: float = DEFAULT_EPS_DEGENERATE
) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Normalize each retained channel to mean 0 and std 1.

    Returns the normalized K x T' matrix and the per-channel (mean, std)
    used. Channels with std below ``eps_degenerate`` get an all-zero row.
    Raises DataError on epochs failing the validity gate.
    """
    if not epoch.is_valid:
        raise DataError(
            f"insufficient data: epoch {epoch.turbine_id}@{epoch.epoch_start:g} has "
            f"{epoch.valid_count} complete timestamps (need {epoch.min_points})"
        )
    rows = epoch.rows
    means = rows.mean(axis=1)
    stds = np.sqrt(((rows - means[:, None]) ** 2).mean(axis=1))
    normalized = np.zeros_like(rows)
    live = stds >= eps_degenerate
    normalized[live] = (rows[live] - means[live, None]) / stds[live, None]
    return normalized, list(zip(means.tolist(), stds.tolist()))


def pearson_matrix(
    epoch: EpochMatrix, eps_degenerate: float = DEFAULT_EPS_DEGENERATE
) -> CorrelationMatrix:
    """Pearson correlation matrix of one valid epoch.

    C_ij = (1/T') sum_t M_i(t) M_j(t) over the normalized rows. The result
    is exactly symmetric with unit diagonal and entries clipped to [-1, 1]
    against floating-point overshoot.
    """
    normalized, stats = normalize_epoch(epoch, eps_degenerate)
    t_prime = epoch.valid_count
    entries = normalized @ normalized.T / t_prime
    entries = (entries + entries.T) / 2.0
    np.clip(entries, -1.0, 1.0, out=entries)
    np.fill_diagonal(entries, 1.0)
    degenerate = frozenset(
        k for k, (_, std) in enumerate(stats) if std < eps_degenerate
    )
    return CorrelationMatrix(
        turbine_id=epoch.turbine_id,
        epoch_start=epoch.epoch_start,
        signals=epoch.signals,
        entries=entries,
        degenerate_channels=degenerate,
    )


def matrix_csv_header(signals: Sequence[str]) -> str:
    k = len(signals)
    cells = [f"C{i + 1}{j + 1}" for i in range(k) for j in range(k)]
    return ",".join(["turbine", "epoch_start", *cells])


def write_matrix_csv(path: str | Path, matrices: Iterable[CorrelationMatrix]) -> None:
    """Dump matrices one per line, row-major, 15 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header_written = False
        for m in matrices:
            if not header_written:
                fh.write(matrix_csv_header(m.signals) + "\n")
                header_written = True
            cells = ",".join(f"{x:.15g}" for x in m.entries.ravel())
            fh.write(f"{m.turbine_id},{m.epoch_start:g},{cells}\n")
