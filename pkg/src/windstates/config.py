"""Run configuration: flat key=value files plus command-line overrides."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import UsageError
from .ingest import DEFAULT_SIGNALS, WIND_CHANNEL

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Every tunable of the pipeline with its default.

    A config file is a flat text file of ``key=value`` lines (``#`` starts a
    comment); any key can also be overridden on the command line as
    ``--key=value``. Wind speeds in artifacts are expressed in units of
    ``v_nom_reference``.
    """

    # ingest
    grid_seconds: float = 10.0
    epoch_seconds: float = 1800.0
    min_points: int = 90
    signals: tuple = DEFAULT_SIGNALS
    eps_degenerate: float = 1e-12
    # clustering
    n_clusters: int = 3
    n_range: str = "2-5"
    restarts: int = 16
    seed: int = 0
    # states
    quantile: float = 0.25
    v_nom_reference: float = 12.0
    bin_width: float = 0.02
    persistence: int = 2
    # synthetic
    turbines: int = 5
    days: float = 20.0
    weibull_shape: float = 2.0
    weibull_scale: float = 10.2
    wind_persistence: float = 129600.0
    mismatch_fraction: float = 0.0
    start_time: float = 0.0
    # input/output
    out: str = "runs/default"
    data_dir: str = ""
    boundaries_path: str = ""
    turbine_include: str = ""
    dump_correlations: bool = False
    workers: int = 1

    @property
    def epoch_length(self) -> int:
        return int(round(self.epoch_seconds / self.grid_seconds))

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def data_path(self) -> Path:
        return Path(self.data_dir) if self.data_dir else self.out_dir / "data"

    @property
    def artifacts_dir(self) -> Path:
        return self.out_dir / "artifacts"

    @property
    def boundaries_file(self) -> Path:
        if self.boundaries_path:
            return Path(self.boundaries_path)
        return self.artifacts_dir / "boundaries.json"

    def n_values(self) -> tuple[int, ...]:
        """Cluster counts for the silhouette table, from '2-5' or '2,3,4'."""
        text = self.n_range.strip()
        try:
            if "-" in text:
                lo, hi = text.split("-", 1)
                values = tuple(range(int(lo), int(hi) + 1))
            else:
                values = tuple(int(p) for p in text.split(",") if p.strip())
        except ValueError:
            raise UsageError(f"cannot parse n_range {self.n_range!r}") from None
        if not values or any(n < 1 for n in values):
            raise UsageError(f"n_range must list cluster counts >= 1, got {self.n_range!r}")
        return values

    def included_turbines(self) -> tuple[str, ...]:
        return tuple(t.strip() for t in self.turbine_include.split(",") if t.strip())

    def validate(self) -> "RunConfig":
        if self.grid_seconds <= 0 or self.epoch_seconds <= 0:
            raise UsageError("grid_seconds and epoch_seconds must be positive")
        if self.epoch_length < 2:
            raise UsageError("epoch_seconds must cover at least 2 grid steps")
        if self.min_points < 2:
            raise UsageError("min_points must be at least 2")
        if not self.signals:
            raise UsageError("signals must be non-empty")
        if len(set(self.signals)) != len(self.signals):
            raise UsageError("signals must be unique")
        if WIND_CHANNEL not in self.signals:
            raise UsageError(f"signals must include {WIND_CHANNEL}")
        if self.n_clusters < 1:
            raise UsageError("n_clusters must be at least 1")
        if self.restarts < 1:
            raise UsageError("restarts must be at least 1")
        if not 0.0 <= self.quantile < 1.0:
            raise UsageError("quantile must be in [0, 1)")
        if self.v_nom_reference <= 0:
            raise UsageError("v_nom_reference must be positive")
        if self.bin_width <= 0:
            raise UsageError("bin_width must be positive")
        if self.persistence < 1:
            raise UsageError("persistence must be at least 1")
        if self.turbines < 1:
            raise UsageError("turbines must be at least 1")
        if self.days <= 0:
            raise UsageError("days must be positive")
        if not 0.0 <= self.mismatch_fraction < 0.2:
            raise UsageError("mismatch_fraction must be in [0, 0.2)")
        if self.workers < 1:
            raise UsageError("workers must be at least 1")
        self.n_values()
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {key} expects a boolean, got {raw!r}")
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError:
        raise UsageError(f"config key {key} expects a {kind}, got {raw!r}") from None
    if kind in ("tuple", tuple):
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    return raw


def parse_config_file(path) -> dict[str, str]:
    """Raw key=value pairs from a flat config file."""
    pairs: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def build_config(
    config_path=None,
    overrides: dict[str, str] | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> RunConfig:
    """Defaults, then config file, then --key=value overrides, then flags."""
    merged: dict[str, str] = {}
    if config_path:
        merged.update(parse_config_file(config_path))
    merged.update(overrides or {})
    cfg = RunConfig()
    for key, raw in merged.items():
        if key not in _FIELD_TYPES:
            raise UsageError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    if seed is not None:
        cfg.seed = int(seed)
    if out is not None:
        cfg.out = str(out)
    return cfg.validate()
