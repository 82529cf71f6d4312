"""Wind-speed boundary models mapping epochs to operational states.

A clustered epoch set is reduced to boundary wind speeds two ways: fitting a
normal distribution to each cluster's epoch-mean wind speeds and intersecting
neighbouring densities (single-turbine scale), or pooling turbines into
per-cluster wind histograms, rescaling by the total count per bin, and
reading off where the per-bin maximum-likelihood cluster switches
(multi-turbine scale). Both produce a StateBoundaries model able to assign
the expected state of any epoch from its mean wind speed alone.

Wind speeds here are in units of the reference nominal wind speed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, UsageError

log = logging.getLogger(__name__)

REGIME_FIXED_MIN = "fixed-min-rpm"
REGIME_PROPORTIONAL = "proportional"
REGIME_FIXED_NOMINAL = "fixed-nominal-rpm"
REGIME_NOMINAL_POWER = "nominal-power"

# Cluster-comparable state index per regime: the two fixed-rpm regimes share
# one correlation structure and therefore one cluster.
STATE_OF_REGIME = {
    REGIME_PROPORTIONAL: 1,
    REGIME_FIXED_MIN: 2,
    REGIME_FIXED_NOMINAL: 2,
    REGIME_NOMINAL_POWER: 3,
}

GAUSSIAN_METHOD = "gaussian-intersection"
HISTOGRAM_METHOD = "histogram-max-likelihood"

DEFAULT_QUANTILE = 0.25
DEFAULT_BIN_WIDTH = 0.02
DEFAULT_PERSISTENCE = 2


def build_regime_map(
    v1: float | None, v2: float | None, v_nom: float | None
) -> tuple[tuple[float, float, str], ...]:
    """Half-open wind intervals [lo, hi) to regime names.

    Missing boundaries collapse their interval into the neighbouring regime;
    without v1 everything below v2 counts as proportional.
    """
    inf = math.inf
    pieces: list[tuple[float, float, str]] = []
    lo = 0.0
    if v1 is not None:
        pieces.append((lo, v1, REGIME_FIXED_MIN))
        lo = v1
    if v2 is not None:
        pieces.append((lo, v2, REGIME_PROPORTIONAL))
        lo = v2
        if v_nom is not None:
            pieces.append((lo, v_nom, REGIME_FIXED_NOMINAL))
            pieces.append((v_nom, inf, REGIME_NOMINAL_POWER))
        else:
            pieces.append((lo, inf, REGIME_FIXED_NOMINAL))
    elif v_nom is not None:
        pieces.append((lo, v_nom, REGIME_PROPORTIONAL))
        pieces.append((v_nom, inf, REGIME_NOMINAL_POWER))
    else:
        pieces.append((lo, inf, REGIME_PROPORTIONAL))
    return tuple(pieces)


@dataclass
class StateBoundaries:
    """Ordered boundary wind speeds plus the wind-interval to state map."""

    method: str
    v1: float | None
    v2: float | None
    v_nom: float | None
    persistence: int | None = None
    bin_width: float | None = None
    regime_map: tuple[tuple[float, float, str], ...] = ()

    def __post_init__(self):
        present = [v for v in (self.v1, self.v2, self.v_nom) if v is not None]
        if any(b <= a for a, b in zip(present, present[1:])):
            raise UsageError(f"boundaries must be strictly increasing, got {present}")
        if not self.regime_map:
            self.regime_map = build_regime_map(self.v1, self.v2, self.v_nom)

    def to_doc(self) -> dict:
        return {
            "method": self.method,
            "v1": self.v1,
            "v2": self.v2,
            "v_nom": self.v_nom,
            "units": "v_nom_reference",
            "persistence": self.persistence,
            "bin_width": self.bin_width,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "StateBoundaries":
        return cls(
            method=doc["method"],
            v1=doc.get("v1"),
            v2=doc.get("v2"),
            v_nom=doc.get("v_nom"),
            persistence=doc.get("persistence"),
            bin_width=doc.get("bin_width"),
        )


def silhouette_filter_mask(
    silhouettes: Sequence[float], quantile: float = DEFAULT_QUANTILE
) -> np.ndarray:
    """Boolean mask keeping values at or above the given quantile."""
    values = np.asarray(silhouettes, dtype=float)
    if values.size == 0:
        raise DataError("no silhouettes to filter")
    if not 0.0 <= quantile < 1.0:
        raise UsageError("quantile must be in [0, 1)")
    threshold = np.quantile(values, quantile)
    return values >= threshold


def filter_by_silhouette_quartile(
    silhouettes: Mapping, quantile: float = DEFAULT_QUANTILE
) -> set:
    """Epoch keys whose silhouette is not below the quantile threshold.

    The threshold is computed over exactly the silhouettes passed in, so
    multi-turbine callers should invoke this once per turbine.
    """
    keys = list(silhouettes)
    mask = silhouette_filter_mask([silhouettes[k] for k in keys], quantile)
    return {k for k, keep in zip(keys, mask) if keep}


@dataclass
class GaussianFit:
    mean: float
    std: float
    count: int

    @property
    def degenerate(self) -> bool:
        return self.std == 0.0


def fit_gaussians(
    winds_by_cluster: Mapping[int, Sequence[float]]
) -> dict[int, GaussianFit]:
    """Sample mean and sample std of epoch-mean wind speed per cluster.

    Clusters with fewer than 2 epochs are skipped with a warning.
    """
    fits: dict[int, GaussianFit] = {}
    for cluster in sorted(winds_by_cluster):
        values = np.asarray(winds_by_cluster[cluster], dtype=float)
        if values.size < 2:
            log.warning(
                "cluster %s has %d epoch(s), too few for a Gaussian fit; skipped",
                cluster, values.size,
            )
            continue
        fit = GaussianFit(
            mean=float(values.mean()),
            std=float(values.std(ddof=1)),
            count=int(values.size),
        )
        if fit.degenerate:
            log.warning("cluster %s has zero wind-speed variance", cluster)
        fits[cluster] = fit
    return fits


def gaussian_boundary(
    g_low: GaussianFit | tuple[float, float], g_high: GaussianFit | tuple[float, float]
) -> float:
    """Wind speed where two per-cluster normal densities intersect.

    Takes the intersection lying strictly between the two means (the
    decision boundary); with equal standard deviations that is the midpoint.
    """
    mu1, s1 = (g_low.mean, g_low.std) if isinstance(g_low, GaussianFit) else g_low
    mu2, s2 = (g_high.mean, g_high.std) if isinstance(g_high, GaussianFit) else g_high
    if not mu1 < mu2:
        raise UsageError(f"means must be ordered, got {mu1} >= {mu2}")
    if s1 <= 0 or s2 <= 0:
        raise UsageError("standard deviations must be positive")
    if abs(s1 - s2) <= 1e-12 * max(s1, s2):
        return (mu1 + mu2) / 2.0
    # N(x|mu1,s1) = N(x|mu2,s2) reduces to a quadratic in x
    a = s1**2 - s2**2
    b = -2.0 * (mu2 * s1**2 - mu1 * s2**2)
    c = mu2**2 * s1**2 - mu1**2 * s2**2 - 2.0 * s1**2 * s2**2 * math.log(s1 / s2)
    disc = b**2 - 4.0 * a * c
    if disc < 0:
        raise DataError("gaussian densities have no real intersection")
    roots = ((-b + math.sqrt(disc)) / (2 * a), (-b - math.sqrt(disc)) / (2 * a))
    inside = [r for r in roots if mu1 < r < mu2]
    if not inside:
        raise DataError(
            f"no density intersection between the means ({mu1:g}, {mu2:g})"
        )
    return float(inside[0])


@dataclass(eq=False)
class WindSpeedHistogram:
    """Per-cluster wind-speed counts on a fixed bin lattice.

    Bin j covers [(first_bin + j) * bin_width, (first_bin + j + 1) *
    bin_width); ``counts[i, j]`` is the number of epochs of cluster
    ``cluster_ids[i]`` in bin j.
    """

    bin_width: float
    first_bin: int
    counts: np.ndarray
    cluster_ids: tuple[int, ...]

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def rescaled(self) -> np.ndarray:
        """Counts divided by the per-bin total; NaN for empty bins."""
        totals = self.totals
        out = np.full(self.counts.shape, np.nan)
        occupied = totals > 0
        out[:, occupied] = self.counts[:, occupied] / totals[occupied]
        return out

    def bin_left(self, j: int) -> float:
        return (self.first_bin + j) * self.bin_width


def build_histograms(
    winds: Sequence[float],
    clusters: Sequence[int],
    bin_width: float = DEFAULT_BIN_WIDTH,
    cluster_ids: Sequence[int] | None = None,
) -> WindSpeedHistogram:
    """Histogram epoch-mean wind speeds per cluster on a common lattice."""
    if bin_width <= 0:
        raise UsageError("bin_width must be positive")
    winds = np.asarray(winds, dtype=float)
    clusters = np.asarray(clusters)
    if winds.size == 0:
        raise DataError("no epochs to histogram")
    if winds.shape != clusters.shape:
        raise UsageError("winds and clusters must have equal length")
    if cluster_ids is None:
        cluster_ids = tuple(int(c) for c in np.unique(clusters))
    idx = np.floor(winds / bin_width).astype(np.int64)
    first_bin = int(idx.min())
    n_bins = int(idx.max()) - first_bin + 1
    counts = np.zeros((len(cluster_ids), n_bins), dtype=np.int64)
    for i, cid in enumerate(cluster_ids):
        sel = clusters == cid
        if sel.any():
            counts[i] = np.bincount(idx[sel] - first_bin, minlength=n_bins)
    return WindSpeedHistogram(
        bin_width=float(bin_width),
        first_bin=first_bin,
        counts=counts,
        cluster_ids=tuple(cluster_ids),
    )


def _persistent_regions(
    argmax_labels: np.ndarray, positions: np.ndarray, persistence: int
) -> list[tuple[int, int]]:
    """Collapse the per-bin argmax sequence into persistent (label, start) runs.

    Runs shorter than ``persistence`` are absorbed by the preceding
    persistent run (or the following one at the start); adjacent runs with
    equal labels merge.
    """
    runs: list[tuple[int, int, int]] = []  # label, start position, length
    for label, pos in zip(argmax_labels, positions):
        if runs and runs[-1][0] == label:
            runs[-1] = (label, runs[-1][1], runs[-1][2] + 1)
        else:
            runs.append((int(label), int(pos), 1))
    anchored = [r for r in runs if r[2] >= persistence]
    if not anchored:
        raise DataError("insufficient regime separation: no persistent regions")
    regions: list[tuple[int, int]] = []
    for label, pos, length in runs:
        if length < persistence:
            continue
        if regions and regions[-1][0] == label:
            continue
        regions.append((label, pos))
    return regions


def ml_boundaries(
    hist: WindSpeedHistogram, persistence: int = DEFAULT_PERSISTENCE
) -> StateBoundaries:
    """Boundaries from the per-bin maximum-likelihood cluster.

    Expects canonical cluster numbering (ascending mean wind speed): 1 =
    proportional, 2 = fixed rpm, 3 = nominal power. A boundary sits at the
    left edge of the first bin of each persistent argmax region; the low-wind
    fixed-rpm region yields v1 only when it persists.
    """
    if persistence < 1:
        raise UsageError("persistence must be at least 1")
    rescaled = hist.rescaled
    occupied = np.flatnonzero(hist.totals > 0)
    if occupied.size == 0:
        raise DataError("histogram is empty")
    winners = np.argmax(rescaled[:, occupied], axis=0)
    labels = np.array([hist.cluster_ids[w] for w in winners])
    regions = _persistent_regions(labels, occupied, persistence)
    if len(regions) < 2:
        raise DataError("insufficient regime separation")

    v1 = v2 = v_nom = None
    pairs = list(zip(regions, regions[1:]))
    start = 0
    for i, ((prev_label, _), (label, pos)) in enumerate(pairs):
        if prev_label == 2 and label == 1:
            v1 = hist.bin_left(pos)
            start = i + 1
            break
    for i, ((prev_label, _), (label, pos)) in enumerate(pairs[start:], start):
        if prev_label == 1 and label == 2:
            v2 = hist.bin_left(pos)
            start = i + 1
            break
    for (_, _), (label, pos) in pairs[start:]:
        if label == 3:
            v_nom = hist.bin_left(pos)
            break
    if v1 is None and v2 is None and v_nom is None:
        raise DataError(
            "could not identify regime boundaries: argmax sequence "
            f"{[label for label, _ in regions]} does not follow the regime order"
        )
    return StateBoundaries(
        method=HISTOGRAM_METHOD,
        v1=v1,
        v2=v2,
        v_nom=v_nom,
        persistence=persistence,
        bin_width=hist.bin_width,
    )


def assign_state(v: float, boundaries: StateBoundaries) -> str:
    """Regime name for a wind speed under the boundary model."""
    if v < 0:
        raise UsageError(f"wind speed must be non-negative, got {v}")
    for lo, hi, regime in boundaries.regime_map:
        if lo <= v < hi:
            return regime
    raise UsageError("regime map does not cover the wind speed")


def assign_cluster_state(v: float, boundaries: StateBoundaries) -> int:
    """Cluster-comparable integer state for a wind speed."""
    return STATE_OF_REGIME[assign_state(v, boundaries)]


def allocation_change_rate(
    cluster_labels: Mapping,
    model_labels: Mapping,
    restrict_to: Iterable | None = None,
) -> float:
    """Fraction of epochs whose model state differs from the cluster label."""
    if set(cluster_labels) != set(model_labels):
        raise UsageError("cluster and model labelings cover different epochs")
    keys = set(cluster_labels)
    if restrict_to is not None:
        keys &= set(restrict_to)
    if not keys:
        raise DataError("no epochs left to compare")
    changed = sum(1 for k in keys if cluster_labels[k] != model_labels[k])
    return changed / len(keys)
