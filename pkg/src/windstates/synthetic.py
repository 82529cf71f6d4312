"""Synthetic SCADA generator with known regime labels.

Produces a correlated wind-speed series (a standard-normal driver mapped to
an exact Weibull marginal), pushes it through a simple turbine controller
with four operating regimes, and records noisy channel measurements on the
sampling grid. Below cut-in the turbine is off and every channel is missing.
The true regime of each timestamp is kept alongside the data, so clustering
and boundary models can be scored against ground truth.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter
from scipy.special import log_ndtr

from .errors import UsageError
from .ingest import DEFAULT_EPOCH_LENGTH, DEFAULT_MIN_POINTS, DEFAULT_SIGNALS, SignalGrid
from .states import (
    REGIME_FIXED_MIN,
    REGIME_FIXED_NOMINAL,
    REGIME_NOMINAL_POWER,
    REGIME_PROPORTIONAL,
)

log = logging.getLogger(__name__)

REGIME_OFF = "off"

# Regime code per index; codes order the regimes by wind speed.
REGIME_NAMES = (
    REGIME_OFF,
    REGIME_FIXED_MIN,
    REGIME_PROPORTIONAL,
    REGIME_FIXED_NOMINAL,
    REGIME_NOMINAL_POWER,
)
CODE_OF_REGIME = {name: code for code, name in enumerate(REGIME_NAMES)}
OPERATING_CODES = (1, 2, 3, 4)

DEFAULT_PERSISTENCE_TIME = 129600.0
DEFAULT_TURBULENCE_WEIGHT = 0.008
DEFAULT_TURBULENCE_TIME = 300.0
WEATHER_PERIOD_RATIOS = (0.55, 0.8, 1.17, 1.7)


def _as_seed(seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


@dataclass
class ControllerSpec:
    """Turbine controller parameters and measurement noise levels.

    Wind thresholds are in m/s: below ``v_on`` the turbine is off, up to
    ``v1`` the rotor holds ``min_rpm``, up to ``v2`` rpm rises linearly with
    wind, up to ``v_nom`` it holds ``nominal_rpm`` while power still tracks
    the wind, and above ``v_nom`` power is capped at ``nominal_power``.
    """

    v_on: float
    v1: float
    v2: float
    v_nom: float
    min_rpm: float = 6.0
    nominal_rpm: float = 13.0
    gear_ratio: float = 100.0
    nominal_power: float = 3000.0
    current_factor: float = 0.9
    response_time: float = 60.0
    restart_delay: float = 1200.0
    rpm_jitter: float = 0.22
    power_jitter: float = 3.0
    power_jitter_rel: float = 0.03
    noise: dict[str, float] = field(
        default_factory=lambda: {
            "ActivePower": 4.0,
            "CurrentL1": 3.0,
            "RotorRPM": 0.01,
            "GeneratorRPM": 1.5,
            "WindSpeed": 0.15,
        }
    )

    def __post_init__(self):
        if not 0 < self.v_on < self.v1 < self.v2 < self.v_nom:
            raise UsageError(
                "wind thresholds must satisfy 0 < v_on < v1 < v2 < v_nom"
            )
        if not 0 < self.min_rpm < self.nominal_rpm:
            raise UsageError("rpm setpoints must satisfy 0 < min_rpm < nominal_rpm")
        if self.gear_ratio <= 0 or self.nominal_power <= 0 or self.current_factor <= 0:
            raise UsageError("gear_ratio, nominal_power and current_factor must be positive")
        if self.response_time < 0 or self.restart_delay < 0:
            raise UsageError("response_time and restart_delay must be non-negative")
        if self.rpm_jitter < 0 or self.power_jitter < 0 or self.power_jitter_rel < 0:
            raise UsageError("jitter levels must be non-negative")
        if set(self.noise) != set(DEFAULT_SIGNALS):
            raise UsageError(f"noise levels must cover exactly {DEFAULT_SIGNALS}")
        if any(v < 0 for v in self.noise.values()):
            raise UsageError("noise levels must be non-negative")

    @classmethod
    def default(cls, v_nom_reference: float = 12.0) -> "ControllerSpec":
        return cls(
            v_on=0.25 * v_nom_reference,
            v1=0.40 * v_nom_reference,
            v2=0.78 * v_nom_reference,
            v_nom=1.12 * v_nom_reference,
        )

    def regime_codes(self, wind: np.ndarray, grid_step: float | None = None) -> np.ndarray:
        """Regime code 0..4 per sample; intervals are half-open [lo, hi).

        With a grid step the restart delay applies: after any sample below
        cut-in the turbine stays off until ``restart_delay`` seconds have
        passed with the wind back above ``v_on``.
        """
        breaks = np.array([self.v_on, self.v1, self.v2, self.v_nom])
        codes = np.searchsorted(breaks, np.asarray(wind, dtype=float), side="right")
        if grid_step and self.restart_delay > 0:
            idx = np.arange(codes.size)
            last_below = np.maximum.accumulate(np.where(codes == 0, idx, -1))
            waiting = (last_below >= 0) & (
                (idx - last_below) * grid_step < self.restart_delay
            )
            codes[waiting] = 0
        return codes

    def lag_alpha(self, grid_step: float) -> float:
        if self.response_time == 0:
            return 1.0
        return 1.0 - float(np.exp(-grid_step / self.response_time))


def _ar1(n: int, grid_step: float, time_constant: float, rng) -> np.ndarray:
    """Stationary standard-normal AR(1) series with the given time constant."""
    rho = float(np.exp(-grid_step / time_constant))
    noise = rng.standard_normal(n)
    noise[1:] *= np.sqrt(1.0 - rho**2)
    return lfilter([1.0], [1.0, -rho], noise)


def generate_wind(
    duration: float,
    grid_step: float = 10.0,
    weibull_shape: float = 2.0,
    weibull_scale: float = 10.2,
    persistence_time: float = DEFAULT_PERSISTENCE_TIME,
    seed=0,
    turbulence_weight: float = DEFAULT_TURBULENCE_WEIGHT,
    turbulence_time: float = DEFAULT_TURBULENCE_TIME,
) -> np.ndarray:
    """Wind-speed series with Weibull marginal and two-scale time correlation.

    A standard-normal driver mixes a slow weather component with a small
    fast AR(1) component (turbulence, ``turbulence_time``) and is mapped
    through the Weibull quantile transform
    v = scale * (-ln(1 - Phi(z)))**(1/shape). The weather component is a sum
    of random-phase harmonics whose periods ladder around 4x
    ``persistence_time``, so the autocorrelation decays on the persistence
    scale and any window a few periods long cycles through calm, moderate
    and strong winds instead of lingering in one band the way a single
    random walk can.
    """
    if duration <= 0 or grid_step <= 0:
        raise UsageError("duration and grid_step must be positive")
    if weibull_shape <= 0 or weibull_scale <= 0 or persistence_time <= 0:
        raise UsageError("weibull_shape, weibull_scale and persistence_time must be positive")
    if not 0.0 <= turbulence_weight < 1.0:
        raise UsageError("turbulence_weight must be in [0, 1)")
    if turbulence_time <= 0:
        raise UsageError("turbulence_time must be positive")
    n = int(round(duration / grid_step))
    if n < 1:
        raise UsageError("duration shorter than one grid step")
    rng = np.random.default_rng(_as_seed(seed))
    t = np.arange(n) * grid_step
    slow = np.zeros(n)
    for ratio in WEATHER_PERIOD_RATIOS:
        period = 4.0 * persistence_time * ratio
        slow += np.sin(2.0 * np.pi * t / period + rng.uniform(0.0, 2.0 * np.pi))
    # each harmonic has variance 1/2, so rescale the sum to unit variance
    slow *= np.sqrt(2.0 / len(WEATHER_PERIOD_RATIOS))
    z = np.sqrt(1.0 - turbulence_weight) * slow
    if turbulence_weight > 0:
        z += np.sqrt(turbulence_weight) * _ar1(n, grid_step, turbulence_time, rng)
    # -log_ndtr(-z) = -ln(1 - Phi(z)), numerically stable for large z
    return weibull_scale * (-log_ndtr(-z)) ** (1.0 / weibull_shape)


def _rpm_power_targets(
    wind: np.ndarray, codes: np.ndarray, spec: ControllerSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Controller setpoints per sample given wind and regime codes."""
    ramp = spec.min_rpm + (spec.nominal_rpm - spec.min_rpm) * (
        (wind - spec.v1) / (spec.v2 - spec.v1)
    )
    ramp = np.clip(ramp, spec.min_rpm, spec.nominal_rpm)
    rpm = np.select(
        [codes == 1, codes == 2, codes >= 3],
        [spec.min_rpm, ramp, spec.nominal_rpm],
        default=0.0,
    )
    cp = spec.nominal_power / spec.v_nom**3
    tracking = np.minimum(cp * wind**3, spec.nominal_power)
    power = np.select([codes == 0, codes == 4], [0.0, spec.nominal_power], default=tracking)
    return rpm, power


def _lagged(x: np.ndarray, alpha: float) -> np.ndarray:
    """First-order lag starting in steady state at x[0]."""
    if alpha >= 1.0:
        return np.array(x, dtype=float)
    y, _ = lfilter([alpha], [1.0, -(1.0 - alpha)], x, zi=[(1.0 - alpha) * x[0]])
    return y


def _jittered_power(lagged: np.ndarray, spec: ControllerSpec, rng: np.random.Generator) -> np.ndarray:
    """Add controller jitter whose level tracks the produced power."""
    scale = spec.power_jitter + spec.power_jitter_rel * np.abs(lagged)
    return lagged + scale * rng.standard_normal(lagged.size)


@dataclass(eq=False)
class MismatchRecord:
    epoch_start: float
    majority_regime: str
    forced_regime: str


@dataclass(eq=False)
class LabelledDataset:
    """Synthetic measurement grid plus the true wind and regime per cell."""

    grid: SignalGrid
    wind: np.ndarray
    regime_codes: np.ndarray
    spec: ControllerSpec
    mismatches: tuple[MismatchRecord, ...] = ()

    def epoch_windows(self, epoch_length: int = DEFAULT_EPOCH_LENGTH) -> list[tuple[int, int]]:
        n = self.grid.n_cells
        return [(s, min(s + epoch_length, n)) for s in range(0, n, epoch_length)]

    def majority_epoch_regimes(
        self, epoch_length: int = DEFAULT_EPOCH_LENGTH
    ) -> list[tuple[float, str]]:
        """(epoch start time, most frequent regime) per epoch; ties take the
        lower-wind regime."""
        out = []
        for s, e in self.epoch_windows(epoch_length):
            counts = np.bincount(self.regime_codes[s:e], minlength=len(REGIME_NAMES))
            code = int(np.argmax(counts))
            out.append((self.grid.start + s * self.grid.grid_step, REGIME_NAMES[code]))
        return out


def simulate_turbine(
    wind: np.ndarray,
    spec: ControllerSpec,
    grid_step: float = 10.0,
    seed=0,
    start: float = 0.0,
    turbine_id: str = "WT01",
) -> LabelledDataset:
    """Measured SCADA channels for one turbine driven by a wind series.

    Setpoints follow the controller regime of the true wind, the physical
    response lags with ``spec.response_time``, shared process jitter moves
    rotor and generator (and power and current) together, and each channel
    adds its own sensor noise. Samples below cut-in are fully missing.
    """
    wind = np.asarray(wind, dtype=float)
    if wind.ndim != 1 or wind.size == 0:
        raise UsageError("wind must be a non-empty 1-d array")
    if np.any(wind < 0):
        raise UsageError("wind speeds must be non-negative")
    n = wind.size
    rng = np.random.default_rng(_as_seed(seed))
    codes = spec.regime_codes(wind, grid_step)
    rpm_target, power_target = _rpm_power_targets(wind, codes, spec)
    alpha = spec.lag_alpha(grid_step)
    rotor = _lagged(rpm_target, alpha) + spec.rpm_jitter * rng.standard_normal(n)
    power = _jittered_power(_lagged(power_target, alpha), spec, rng)

    values = np.empty((len(DEFAULT_SIGNALS), n))
    values[0] = power + rng.normal(0.0, spec.noise["ActivePower"], n)
    values[1] = spec.current_factor * power + rng.normal(0.0, spec.noise["CurrentL1"], n)
    values[2] = rotor + rng.normal(0.0, spec.noise["RotorRPM"], n)
    values[3] = spec.gear_ratio * rotor + rng.normal(0.0, spec.noise["GeneratorRPM"], n)
    values[4] = wind + rng.normal(0.0, spec.noise["WindSpeed"], n)
    values[:, codes == 0] = np.nan

    grid = SignalGrid(
        turbine_id=turbine_id,
        grid_step=float(grid_step),
        signals=DEFAULT_SIGNALS,
        start=float(start),
        values=values,
    )
    return LabelledDataset(grid=grid, wind=wind, regime_codes=codes, spec=spec)


def _band_of_code(spec: ControllerSpec, code: int) -> tuple[float, float]:
    """Wind interval of an operating regime code."""
    edges = (spec.v_on, spec.v1, spec.v2, spec.v_nom, 1.25 * spec.v_nom)
    return edges[code - 1], edges[code]


def _mapped_wind(wind_seg: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Affine-map a wind segment into the interior of [lo, hi].

    Keeps the segment's fluctuation structure, so channels regenerated from
    the mapped wind carry the forced regime's correlations while staying
    tied to the true wind's ups and downs.
    """
    w_min = wind_seg.min()
    span = wind_seg.max() - w_min
    if span <= 0:
        return np.full(wind_seg.size, (lo + hi) / 2.0)
    return lo + (0.1 + 0.8 * (wind_seg - w_min) / span) * (hi - lo)


def inject_mismatch(
    dataset: LabelledDataset,
    fraction: float,
    seed=0,
    epoch_length: int = DEFAULT_EPOCH_LENGTH,
    min_points: int = DEFAULT_MIN_POINTS,
) -> LabelledDataset:
    """Regenerate half of some epochs under a wrong regime.

    A random subset of the valid operating epochs gets a contiguous half of
    its measured channels resimulated with the controller forced into a
    different regime (driven by the true wind mapped into that regime's
    wind band), while the wind channel and the true labels stay untouched.
    The result is an epoch whose correlation structure is partly
    inconsistent with its wind speed, the kind of anomaly the silhouette
    filter is meant to flag.
    """
    if not 0.0 <= fraction < 0.2:
        raise UsageError("mismatch fraction must be in [0, 0.2)")
    if fraction == 0.0:
        return dataset
    grid = dataset.grid
    step = grid.grid_step
    complete = grid.complete_mask()
    windows = dataset.epoch_windows(epoch_length)
    eligible = []
    for s, e in windows:
        counts = np.bincount(dataset.regime_codes[s:e], minlength=len(REGIME_NAMES))
        majority = int(np.argmax(counts))
        if majority >= 1 and int(complete[s:e].sum()) >= min_points:
            eligible.append((s, e, majority))
    k = int(round(fraction * len(eligible)))
    if k == 0:
        log.info("mismatch fraction %.3f selects no epochs", fraction)
        return dataset
    rng = np.random.default_rng(_as_seed(seed))
    chosen = np.sort(rng.choice(len(eligible), size=k, replace=False))

    values = grid.values.copy()
    alpha = dataset.spec.lag_alpha(step)
    spec = dataset.spec
    records = list(dataset.mismatches)
    channel = {name: i for i, name in enumerate(grid.signals)}
    for idx in chosen:
        s, e, majority = eligible[int(idx)]
        forced = int(rng.choice([c for c in OPERATING_CODES if c != majority]))
        span = e - s
        seg_len = max(1, span // 2)
        offset = int(rng.integers(0, span - seg_len + 1))
        s0 = s + offset
        e0 = s0 + seg_len
        lo, hi = _band_of_code(spec, forced)
        wind_seg = _mapped_wind(dataset.wind[s0:e0], lo, hi)
        forced_codes = np.full(seg_len, forced)
        rpm_target, power_target = _rpm_power_targets(wind_seg, forced_codes, spec)
        rotor = _lagged(rpm_target, alpha) + spec.rpm_jitter * rng.standard_normal(seg_len)
        power = _jittered_power(_lagged(power_target, alpha), spec, rng)
        seg = {
            "ActivePower": power + rng.normal(0.0, spec.noise["ActivePower"], seg_len),
            "CurrentL1": spec.current_factor * power
            + rng.normal(0.0, spec.noise["CurrentL1"], seg_len),
            "RotorRPM": rotor + rng.normal(0.0, spec.noise["RotorRPM"], seg_len),
            "GeneratorRPM": spec.gear_ratio * rotor
            + rng.normal(0.0, spec.noise["GeneratorRPM"], seg_len),
        }
        off = dataset.regime_codes[s0:e0] == 0
        for name, row in seg.items():
            row[off] = np.nan
            values[channel[name], s0:e0] = row
        records.append(
            MismatchRecord(
                epoch_start=grid.start + s * step,
                majority_regime=REGIME_NAMES[majority],
                forced_regime=REGIME_NAMES[forced],
            )
        )
    new_grid = replace(grid, values=values)
    return LabelledDataset(
        grid=new_grid,
        wind=dataset.wind,
        regime_codes=dataset.regime_codes,
        spec=spec,
        mismatches=tuple(records),
    )


def write_dataset_csv(dataset: LabelledDataset, path) -> None:
    """Measurement grid as CSV: timestamp plus one column per channel."""
    grid = dataset.grid
    ts = grid.timestamps
    with open(path, "w") as fh:
        fh.write("timestamp," + ",".join(grid.signals) + "\n")
        for j in range(grid.n_cells):
            cells = [_format_timestamp(ts[j])]
            for i in range(grid.n_channels):
                v = grid.values[i, j]
                cells.append("" if np.isnan(v) else f"{v:.6f}")
            fh.write(",".join(cells) + "\n")


def write_labels_csv(dataset: LabelledDataset, path) -> None:
    """True regime per grid timestamp as CSV."""
    ts = dataset.grid.timestamps
    with open(path, "w") as fh:
        fh.write("timestamp,regime\n")
        for j in range(dataset.grid.n_cells):
            fh.write(f"{_format_timestamp(ts[j])},{REGIME_NAMES[dataset.regime_codes[j]]}\n")


def write_mismatch_csv(dataset: LabelledDataset, path) -> None:
    """Injected mismatch bookkeeping as CSV."""
    with open(path, "w") as fh:
        fh.write("turbine,epoch_start,majority_regime,forced_regime\n")
        for rec in dataset.mismatches:
            fh.write(
                f"{dataset.grid.turbine_id},{_format_timestamp(rec.epoch_start)},"
                f"{rec.majority_regime},{rec.forced_regime}\n"
            )


def _format_timestamp(t: float) -> str:
    if float(t).is_integer():
        return str(int(t))
    return f"{t:.6f}"
