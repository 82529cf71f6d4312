"""Operational-state detection for multivariate turbine sensor streams.

The pipeline resamples raw SCADA channels onto a fixed grid, computes one
Pearson correlation matrix per 30-minute epoch, clusters the matrices with
bisecting k-means, and learns wind-speed boundaries that predict the state
of any new epoch from its mean wind speed.
"""

from .clustering import (
    ClusterSolution,
    bisecting_kmeans,
    kmeans_two,
    matrix_distance,
    silhouette_scores,
    silhouette_table,
)
from .config import RunConfig, build_config
from .correlation import CorrelationMatrix, normalize_epoch, pearson_matrix
from .errors import DataError, UsageError, WindstatesError
from .ingest import (
    EpochMatrix,
    SignalGrid,
    epoch_summary,
    read_turbine_csv,
    resample_to_grid,
    segment_epochs,
)
from .states import (
    StateBoundaries,
    WindSpeedHistogram,
    allocation_change_rate,
    assign_state,
    build_histograms,
    filter_by_silhouette_quartile,
    fit_gaussians,
    gaussian_boundary,
    ml_boundaries,
)
from .synthetic import (
    ControllerSpec,
    LabelledDataset,
    generate_wind,
    inject_mismatch,
    simulate_turbine,
)
from .version import __version__

__all__ = [
    "ClusterSolution",
    "ControllerSpec",
    "CorrelationMatrix",
    "DataError",
    "EpochMatrix",
    "LabelledDataset",
    "RunConfig",
    "SignalGrid",
    "StateBoundaries",
    "UsageError",
    "WindSpeedHistogram",
    "WindstatesError",
    "__version__",
    "allocation_change_rate",
    "assign_state",
    "bisecting_kmeans",
    "build_config",
    "build_histograms",
    "epoch_summary",
    "filter_by_silhouette_quartile",
    "fit_gaussians",
    "gaussian_boundary",
    "generate_wind",
    "inject_mismatch",
    "kmeans_two",
    "matrix_distance",
    "ml_boundaries",
    "normalize_epoch",
    "pearson_matrix",
    "read_turbine_csv",
    "resample_to_grid",
    "segment_epochs",
    "silhouette_scores",
    "silhouette_table",
    "simulate_turbine",
]
