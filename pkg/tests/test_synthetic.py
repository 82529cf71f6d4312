import numpy as np
import pytest
from scipy.stats import kstest

from windstates.clustering import bisecting_kmeans
from windstates.correlation import pearson_matrix
from windstates.errors import UsageError
from windstates.ingest import DEFAULT_SIGNALS, SignalGrid, read_turbine_csv, segment_epochs
from windstates.states import filter_by_silhouette_quartile
from windstates.synthetic import (
    ControllerSpec,
    LabelledDataset,
    generate_wind,
    inject_mismatch,
    simulate_turbine,
    write_dataset_csv,
    write_labels_csv,
    write_mismatch_csv,
)


def quiet_spec(**overrides):
    """Default thresholds with every noise and jitter source switched off."""
    base = dict(
        v_on=3.0,
        v1=4.8,
        v2=9.36,
        v_nom=13.44,
        response_time=0.0,
        restart_delay=0.0,
        rpm_jitter=0.0,
        power_jitter=0.0,
        power_jitter_rel=0.0,
        noise={s: 0.0 for s in DEFAULT_SIGNALS},
    )
    base.update(overrides)
    return ControllerSpec(**base)


def test_generate_wind_deterministic_per_seed():
    a = generate_wind(36000.0, seed=4)
    b = generate_wind(36000.0, seed=4)
    c = generate_wind(36000.0, seed=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    d = generate_wind(36000.0, seed=(0, 4))
    assert not np.array_equal(a, d)


def test_generate_wind_length_and_positivity():
    v = generate_wind(3600.0, grid_step=10.0, seed=0)
    assert v.shape == (360,)
    assert np.all(v > 0)
    assert np.all(np.isfinite(v))


def test_generate_wind_weibull_marginal():
    # short persistence so 1e5 samples cover many weather cycles
    v = generate_wind(1_000_000.0, persistence_time=500.0, seed=0)
    stat = kstest(v, "weibull_min", args=(2.0, 0.0, 10.2)).statistic
    assert stat < 0.02


def test_generate_wind_is_persistent():
    v = generate_wind(86400.0, seed=3)
    r = np.corrcoef(v[:-1], v[1:])[0, 1]
    assert r > 0.9


def test_generate_wind_parameter_errors():
    with pytest.raises(UsageError):
        generate_wind(0.0)
    with pytest.raises(UsageError):
        generate_wind(3600.0, grid_step=-1.0)
    with pytest.raises(UsageError):
        generate_wind(3600.0, weibull_shape=0.0)
    with pytest.raises(UsageError):
        generate_wind(3600.0, weibull_scale=-2.0)
    with pytest.raises(UsageError):
        generate_wind(3600.0, persistence_time=0.0)
    with pytest.raises(UsageError):
        generate_wind(3600.0, turbulence_weight=1.0)
    with pytest.raises(UsageError):
        generate_wind(3600.0, turbulence_weight=-0.1)
    with pytest.raises(UsageError):
        generate_wind(3600.0, turbulence_time=0.0)
    with pytest.raises(UsageError):
        generate_wind(4.0, grid_step=10.0)


def test_controller_spec_default_ratios():
    spec = ControllerSpec.default(12.0)
    assert spec.v_on == pytest.approx(3.0)
    assert spec.v1 == pytest.approx(4.8)
    assert spec.v2 == pytest.approx(9.36)
    assert spec.v_nom == pytest.approx(13.44)


def test_controller_spec_validation_errors():
    with pytest.raises(UsageError):
        ControllerSpec(v_on=5.0, v1=4.8, v2=9.36, v_nom=13.44)
    with pytest.raises(UsageError):
        ControllerSpec(v_on=3.0, v1=4.8, v2=9.36, v_nom=13.44, min_rpm=14.0)
    with pytest.raises(UsageError):
        ControllerSpec(v_on=3.0, v1=4.8, v2=9.36, v_nom=13.44, gear_ratio=0.0)
    with pytest.raises(UsageError):
        ControllerSpec(v_on=3.0, v1=4.8, v2=9.36, v_nom=13.44, response_time=-1.0)
    with pytest.raises(UsageError):
        ControllerSpec(v_on=3.0, v1=4.8, v2=9.36, v_nom=13.44, rpm_jitter=-0.1)
    with pytest.raises(UsageError):
        ControllerSpec(v_on=3.0, v1=4.8, v2=9.36, v_nom=13.44, noise={"WindSpeed": 0.1})
    with pytest.raises(UsageError):
        ControllerSpec(
            v_on=3.0, v1=4.8, v2=9.36, v_nom=13.44,
            noise={s: -1.0 for s in DEFAULT_SIGNALS},
        )


def test_regime_codes_half_open_intervals():
    # literal thresholds so the boundary cases compare exactly
    spec = ControllerSpec(v_on=3.0, v1=4.8, v2=9.36, v_nom=13.44)
    wind = np.array([2.99, 3.0, 4.79, 4.8, 9.35, 9.36, 13.43, 13.44, 20.0])
    codes = spec.regime_codes(wind)
    np.testing.assert_array_equal(codes, [0, 1, 1, 2, 2, 3, 3, 4, 4])


def test_regime_codes_restart_delay():
    spec = ControllerSpec.default()
    wind = np.full(200, 5.0)
    wind[10] = 2.0
    codes = spec.regime_codes(wind, grid_step=10.0)
    assert codes[9] == 2
    assert codes[10] == 0
    # restart_delay=1200 s at 10 s steps keeps the next 119 samples off
    np.testing.assert_array_equal(codes[11:130], 0)
    np.testing.assert_array_equal(codes[130:], 2)


def test_regime_codes_no_delay_without_grid_step():
    spec = ControllerSpec.default()
    wind = np.full(20, 5.0)
    wind[10] = 2.0
    codes = spec.regime_codes(wind)
    assert codes[10] == 0
    assert codes[11] == 2
    # a zero restart_delay disables the hold even with a grid step
    codes = quiet_spec().regime_codes(wind, grid_step=10.0)
    assert codes[11] == 2


def test_labels_depend_only_on_wind_and_spec():
    wind = generate_wind(86400.0, persistence_time=20000.0, seed=5)
    spec = ControllerSpec.default()
    a = simulate_turbine(wind, spec, seed=1)
    b = simulate_turbine(wind, spec, seed=99)
    np.testing.assert_array_equal(a.regime_codes, b.regime_codes)
    assert a.majority_epoch_regimes() == b.majority_epoch_regimes()
    assert not np.array_equal(
        a.grid.values, b.grid.values, equal_nan=True
    )


def test_proportional_step_settles_within_five_response_times():
    spec = quiet_spec(response_time=60.0)
    wind = np.concatenate([np.full(100, 6.0), np.full(100, 8.0)])
    ds = simulate_turbine(wind, spec, grid_step=10.0, seed=0)
    np.testing.assert_array_equal(ds.regime_codes, 2)

    ramp = lambda w: spec.min_rpm + (spec.nominal_rpm - spec.min_rpm) * (
        (w - spec.v1) / (spec.v2 - spec.v1)
    )
    rotor = ds.grid.values[2]
    # lag starts in steady state, so the first plateau is exact
    np.testing.assert_allclose(rotor[:100], ramp(6.0), atol=1e-9)
    # five response times after the step the new target is reached
    assert np.all(np.abs(rotor[130:] - ramp(8.0)) < 0.05)


def test_nominal_power_above_v_nom():
    ds = simulate_turbine(np.full(60, 15.0), quiet_spec(), seed=0)
    np.testing.assert_allclose(ds.grid.values[0], 3000.0, atol=1e-9)
    np.testing.assert_allclose(ds.grid.values[1], 0.9 * 3000.0, atol=1e-9)
    assert ds.majority_epoch_regimes(epoch_length=60) == [(0.0, "nominal-power")]


def test_below_cut_in_all_channels_missing():
    ds = simulate_turbine(np.full(60, 2.0), ControllerSpec.default(), seed=0)
    assert np.isnan(ds.grid.values).all()
    assert not ds.grid.complete_mask().any()
    assert ds.majority_epoch_regimes(epoch_length=60) == [(0.0, "off")]


def test_missing_cells_follow_regime_codes():
    wind = generate_wind(86400.0, persistence_time=5000.0, seed=7)
    ds = simulate_turbine(wind, ControllerSpec.default(), seed=7)
    assert ds.regime_codes.min() == 0 and ds.regime_codes.max() >= 1
    np.testing.assert_array_equal(ds.grid.complete_mask(), ds.regime_codes != 0)


def test_exact_channel_relations_without_noise():
    rng = np.random.default_rng(11)
    wind = rng.uniform(5.0, 9.0, 180)
    ds = simulate_turbine(wind, quiet_spec(), seed=0)
    np.testing.assert_array_equal(ds.regime_codes, 2)
    epoch = segment_epochs(ds.grid)[0]
    assert epoch.valid_count == 180
    c = pearson_matrix(epoch).entries
    # rotor speed is affine in wind here and the generator is geared to it
    for i, j in [(4, 2), (4, 3), (2, 3)]:
        assert c[i, j] == pytest.approx(1.0, abs=1e-9)
    # current is proportional to power
    assert c[0, 1] == pytest.approx(1.0, abs=1e-9)
    # power is cubic in wind, so it correlates well but not perfectly
    assert 0.9 < c[0, 4] < 1.0 - 1e-12


def test_simulate_turbine_input_errors():
    spec = ControllerSpec.default()
    with pytest.raises(UsageError):
        simulate_turbine(np.empty(0), spec)
    with pytest.raises(UsageError):
        simulate_turbine(np.array([[5.0, 6.0]]), spec)
    with pytest.raises(UsageError):
        simulate_turbine(np.array([5.0, -0.1]), spec)


def operating_dataset(n_days=2, wind_seed=8, sim_seed=9):
    wind = generate_wind(n_days * 86400.0, persistence_time=20000.0, seed=wind_seed)
    return simulate_turbine(wind, ControllerSpec.default(), seed=sim_seed)


def test_inject_mismatch_fraction_zero_is_identity():
    ds = operating_dataset()
    assert inject_mismatch(ds, 0.0, seed=1) is ds


def test_inject_mismatch_fraction_bounds():
    ds = operating_dataset()
    with pytest.raises(UsageError):
        inject_mismatch(ds, 0.2)
    with pytest.raises(UsageError):
        inject_mismatch(ds, -0.01)


def test_inject_mismatch_bookkeeping():
    ds = operating_dataset()
    out = inject_mismatch(ds, 0.1, seed=2)
    assert out is not ds
    n_epochs = len(ds.epoch_windows())
    assert 1 <= len(out.mismatches) <= 0.1 * n_epochs + 1

    # truth stays untouched: wind, labels and the wind channel
    np.testing.assert_array_equal(out.wind, ds.wind)
    np.testing.assert_array_equal(out.regime_codes, ds.regime_codes)
    np.testing.assert_array_equal(out.grid.values[4], ds.grid.values[4])
    changed = ~np.isclose(out.grid.values, ds.grid.values, equal_nan=True)
    assert changed.any()

    epoch_span = 180 * ds.grid.grid_step
    starts = {ep_start for ep_start, _ in ds.majority_epoch_regimes()}
    majority = dict(ds.majority_epoch_regimes())
    for rec in out.mismatches:
        assert rec.epoch_start in starts
        assert (rec.epoch_start - ds.grid.start) % epoch_span == 0
        assert rec.forced_regime != rec.majority_regime
        assert rec.majority_regime == majority[rec.epoch_start]
        assert rec.forced_regime != "off"

    # changes are confined to the recorded epochs
    cells = np.flatnonzero(changed.any(axis=0))
    times = ds.grid.start + cells * ds.grid.grid_step
    recorded = {rec.epoch_start for rec in out.mismatches}
    owner = ds.grid.start + (times - ds.grid.start) // epoch_span * epoch_span
    assert set(owner) <= recorded


def test_inject_mismatch_tiny_fraction_selects_nothing():
    ds = operating_dataset(n_days=1)
    assert inject_mismatch(ds, 0.001, seed=3) is ds


def test_mismatched_epochs_fail_silhouette_filter():
    wind = generate_wind(20 * 86400.0, seed=(1, 1, 0))
    ds = simulate_turbine(wind, ControllerSpec.default(), seed=(1, 1, 1))
    ds = inject_mismatch(ds, 0.05, seed=(1, 1, 2))
    epochs = [ep for ep in segment_epochs(ds.grid) if ep.is_valid]
    mats = [pearson_matrix(ep).entries for ep in epochs]
    winds = [ep.channel_mean("WindSpeed") for ep in epochs]
    solution = bisecting_kmeans(mats, 3, seed=(1, 1, 3), wind_speeds=winds)
    sil = {ep.epoch_start: s for ep, s in zip(epochs, solution.silhouettes)}
    kept = filter_by_silhouette_quartile(sil)

    injected = {rec.epoch_start for rec in ds.mismatches} & set(sil)
    assert len(injected) >= 20
    removed = injected - kept
    assert len(removed) / len(injected) >= 0.6


def test_write_dataset_csv_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    wind = rng.uniform(3.5, 13.0, 360)
    wind[5] = 1.0
    ds = simulate_turbine(wind, ControllerSpec.default(), seed=2, turbine_id="WT07")
    path = tmp_path / "WT07.csv"
    write_dataset_csv(ds, path)

    grid = read_turbine_csv(path)
    assert grid.turbine_id == "WT07"
    assert grid.signals == ds.grid.signals
    assert grid.n_cells == ds.grid.n_cells
    assert grid.start == ds.grid.start
    np.testing.assert_allclose(grid.values, ds.grid.values, atol=1e-5, equal_nan=True)


def test_write_labels_csv(tmp_path):
    ds = operating_dataset(n_days=1)
    path = tmp_path / "labels.csv"
    write_labels_csv(ds, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "timestamp,regime"
    assert len(lines) == 1 + ds.grid.n_cells
    names = ("off", "fixed-min-rpm", "proportional", "fixed-nominal-rpm", "nominal-power")
    for j in (0, 1000, ds.grid.n_cells - 1):
        ts, regime = lines[1 + j].split(",")
        assert float(ts) == ds.grid.timestamps[j]
        assert regime == names[ds.regime_codes[j]]


def test_write_mismatch_csv(tmp_path):
    ds = inject_mismatch(operating_dataset(), 0.1, seed=2)
    path = tmp_path / "mismatch.csv"
    write_mismatch_csv(ds, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "turbine,epoch_start,majority_regime,forced_regime"
    assert len(lines) == 1 + len(ds.mismatches)
    turbine, start, majority, forced = lines[1].split(",")
    assert turbine == ds.grid.turbine_id
    assert float(start) == ds.mismatches[0].epoch_start
    assert majority == ds.mismatches[0].majority_regime
    assert forced == ds.mismatches[0].forced_regime


def test_majority_tie_takes_lower_wind_regime():
    grid = SignalGrid(
        turbine_id="T",
        grid_step=10.0,
        signals=DEFAULT_SIGNALS,
        start=0.0,
        values=np.zeros((5, 4)),
    )
    ds = LabelledDataset(
        grid=grid,
        wind=np.full(4, 5.0),
        regime_codes=np.array([2, 1, 2, 1]),
        spec=ControllerSpec.default(),
    )
    assert ds.majority_epoch_regimes(epoch_length=4) == [(0.0, "fixed-min-rpm")]
