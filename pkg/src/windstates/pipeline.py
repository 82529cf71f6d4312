"""End-to-end pipeline commands shared by the service and the CLI.

Each command reads its inputs from disk, writes plot-ready CSV/JSON
artifacts under ``<out>/artifacts`` (datasets under ``<out>/data``) and
returns a JSON-able summary. Commands compose: synth -> ingest -> cluster
-> boundaries -> assign -> report. All randomness is derived from the
configured seed, turbine by turbine, so identical configs produce
byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .clustering import bisecting_kmeans, silhouette_table
from .config import RunConfig
from .correlation import pearson_matrix, write_matrix_csv
from .errors import DataError
from .ingest import (
    WIND_CHANNEL,
    EpochMatrix,
    SignalGrid,
    epoch_summary,
    read_turbine_csv,
    segment_epochs,
)
from .states import (
    GAUSSIAN_METHOD,
    StateBoundaries,
    allocation_change_rate,
    assign_cluster_state,
    build_histograms,
    filter_by_silhouette_quartile,
    fit_gaussians,
    gaussian_boundary,
    ml_boundaries,
)
from .synthetic import (
    ControllerSpec,
    generate_wind,
    inject_mismatch,
    simulate_turbine,
    write_dataset_csv,
    write_labels_csv,
    write_mismatch_csv,
)

log = logging.getLogger(__name__)

LABELS_FILE = "labels.csv"
SUMMARY_FILE = "epoch_summary.csv"
CENTROIDS_FILE = "centroids.json"
DENDROGRAMS_FILE = "dendrograms.json"
SIL_TABLE_FILE = "silhouette_table.csv"
CORRELATIONS_FILE = "correlations.csv"
BOUNDARIES_FILE = "boundaries.json"
PER_TURBINE_FILE = "boundaries_per_turbine.json"
ASSIGNMENTS_FILE = "assignments.csv"
ALLOCATION_FILE = "allocation_report.json"
CHANGE_RATES_FILE = "change_rates.csv"
RATE_HIST_FILE = "change_rate_histogram.csv"
REPORT_FILE = "report.json"

RATE_HIST_BIN = 0.01


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return ""
    return f"{x:.15g}"


def _fmt_ts(t: float) -> str:
    t = float(t)
    return str(int(t)) if t.is_integer() else f"{t:.6f}"


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path):
    return json.loads(path.read_text())


def _pool_map(cfg: RunConfig, fn, items: list) -> list:
    """Map fn over per-turbine work items; results keep the input order."""
    if cfg.workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, items))


def run_synth(cfg: RunConfig) -> dict:
    """Generate labelled synthetic turbine CSVs under <out>/data."""
    data = cfg.data_path
    data.mkdir(parents=True, exist_ok=True)
    spec = ControllerSpec.default(cfg.v_nom_reference)
    duration = cfg.days * 86400.0

    def make(index: int):
        turbine_id = f"WT{index:02d}"
        wind = generate_wind(
            duration,
            grid_step=cfg.grid_seconds,
            weibull_shape=cfg.weibull_shape,
            weibull_scale=cfg.weibull_scale,
            persistence_time=cfg.wind_persistence,
            seed=(cfg.seed, index, 0),
        )
        dataset = simulate_turbine(
            wind,
            spec,
            grid_step=cfg.grid_seconds,
            seed=(cfg.seed, index, 1),
            start=cfg.start_time,
            turbine_id=turbine_id,
        )
        if cfg.mismatch_fraction > 0:
            dataset = inject_mismatch(
                dataset,
                cfg.mismatch_fraction,
                seed=(cfg.seed, index, 2),
                epoch_length=cfg.epoch_length,
                min_points=cfg.min_points,
            )
        return dataset

    datasets = _pool_map(cfg, make, list(range(1, cfg.turbines + 1)))
    files = []
    mismatched = 0
    for dataset in datasets:
        turbine_id = dataset.grid.turbine_id
        write_dataset_csv(dataset, data / f"{turbine_id}.csv")
        write_labels_csv(dataset, data / f"{turbine_id}.labels.csv")
        files.extend([f"{turbine_id}.csv", f"{turbine_id}.labels.csv"])
        if dataset.mismatches:
            write_mismatch_csv(dataset, data / f"{turbine_id}.mismatches.csv")
            files.append(f"{turbine_id}.mismatches.csv")
            mismatched += len(dataset.mismatches)
    return {
        "command": "synth",
        "turbines": cfg.turbines,
        "cells_per_turbine": int(datasets[0].grid.n_cells),
        "mismatched_epochs": mismatched,
        "data_dir": str(data),
        "files": files,
    }


def turbine_files(cfg: RunConfig) -> list[Path]:
    """Turbine CSVs in the data directory, sorted, minus sidecar files."""
    root = cfg.data_path
    if not root.is_dir():
        raise DataError(
            f"data directory {root} does not exist; run synth or set data_dir"
        )
    files = [
        p
        for p in sorted(root.glob("*.csv"))
        if not p.name.endswith(".labels.csv")
        and not p.name.endswith(".mismatches.csv")
    ]
    include = cfg.included_turbines()
    if include:
        files = [p for p in files if p.stem in include]
    if not files:
        raise DataError(f"no turbine CSVs found in {root}")
    return files


def _load_epochs(cfg: RunConfig, path: Path) -> tuple[SignalGrid, list[EpochMatrix]]:
    grid = read_turbine_csv(path, signals=cfg.signals, grid_step=cfg.grid_seconds)
    epochs = segment_epochs(grid, epoch_length=cfg.epoch_length, min_points=cfg.min_points)
    return grid, epochs


def run_ingest(cfg: RunConfig) -> dict:
    """Resample and gate every turbine; write the epoch summary."""
    files = turbine_files(cfg)
    cfg.artifacts_dir.mkdir(parents=True, exist_ok=True)

    results = _pool_map(cfg, lambda p: (p, *_load_epochs(cfg, p)), files)
    out_rows = []
    matrices = []
    per_turbine = {}
    for path, grid, epochs in results:
        summaries = epoch_summary(epochs, wind_channel=WIND_CHANNEL)
        valid = sum(1 for s in summaries if s.valid)
        per_turbine[grid.turbine_id] = {
            "epochs": len(summaries),
            "valid": valid,
            "skipped_rows": grid.skipped_rows,
        }
        for s in summaries:
            out_rows.append(
                (
                    s.turbine_id,
                    _fmt_ts(s.epoch_start),
                    _fmt(s.mean_wind_speed / cfg.v_nom_reference),
                    str(s.valid_count),
                    "true" if s.valid else "false",
                )
            )
        if cfg.dump_correlations:
            matrices.extend(
                pearson_matrix(ep, cfg.eps_degenerate) for ep in epochs if ep.is_valid
            )
    with open(cfg.artifacts_dir / SUMMARY_FILE, "w") as fh:
        fh.write("turbine,epoch_start,mean_wind_speed,valid_count,valid\n")
        for row in out_rows:
            fh.write(",".join(row) + "\n")
    written = [SUMMARY_FILE]
    if cfg.dump_correlations:
        write_matrix_csv(cfg.artifacts_dir / CORRELATIONS_FILE, matrices)
        written.append(CORRELATIONS_FILE)
    return {
        "command": "ingest",
        "turbines": per_turbine,
        "epochs": sum(t["epochs"] for t in per_turbine.values()),
        "valid_epochs": sum(t["valid"] for t in per_turbine.values()),
        "artifacts": written,
    }


def _cluster_turbine(cfg: RunConfig, index: int, path: Path):
    """Cluster one turbine's valid epochs; None when it must be skipped."""
    grid, epochs = _load_epochs(cfg, path)
    valid = [ep for ep in epochs if ep.is_valid]
    needed = max(cfg.n_clusters, 2)
    if len(valid) < needed:
        log.warning(
            "turbine %s has %d valid epochs, need %d; skipped",
            grid.turbine_id, len(valid), needed,
        )
        return None
    matrices = [pearson_matrix(ep, cfg.eps_degenerate) for ep in valid]
    objects = [m.entries for m in matrices]
    winds = np.array(
        [ep.channel_mean(WIND_CHANNEL) / cfg.v_nom_reference for ep in valid]
    )
    solution = bisecting_kmeans(
        objects,
        cfg.n_clusters,
        seed=(cfg.seed, index),
        restarts=cfg.restarts,
        wind_speeds=winds,
    )
    table = []
    for n in cfg.n_values():
        if n > len(objects):
            log.warning(
                "turbine %s: silhouette table skips N=%d (> %d epochs)",
                grid.turbine_id, n, len(objects),
            )
            continue
        table.extend(
            silhouette_table(
                objects, [n], seed=(cfg.seed, index), restarts=cfg.restarts,
                wind_speeds=winds,
            )
        )
    return grid.turbine_id, valid, solution, winds, table


def run_cluster(cfg: RunConfig) -> dict:
    """Cluster every turbine's correlation matrices; write solution artifacts."""
    files = turbine_files(cfg)
    cfg.artifacts_dir.mkdir(parents=True, exist_ok=True)
    results = _pool_map(
        cfg,
        lambda item: _cluster_turbine(cfg, item[0], item[1]),
        list(enumerate(files, start=1)),
    )
    if all(r is None for r in results):
        raise DataError("no turbine produced enough valid epochs to cluster")

    label_lines = []
    centroids_doc: dict = {"signals": list(cfg.signals), "turbines": {}}
    dendro_doc: dict = {}
    table_lines = []
    skipped = [path.stem for path, r in zip(files, results) if r is None]
    clustered = 0
    for result in results:
        if result is None:
            continue
        turbine_id, valid, solution, winds, table = result
        clustered += len(valid)
        sil = solution.silhouettes
        for i, ep in enumerate(valid):
            label_lines.append(
                f"{turbine_id},{_fmt_ts(ep.epoch_start)},{solution.labels[i]},"
                f"{_fmt(sil[i]) if sil is not None else ''},{_fmt(winds[i])}"
            )
        centroids_doc["turbines"][turbine_id] = {
            str(c + 1): {
                "size": int(solution.sizes[c]),
                "matrix": [[float(v) for v in row] for row in solution.centroids[c]],
            }
            for c in range(solution.n_clusters)
        }
        dendro_doc[turbine_id] = [list(split) for split in solution.dendrogram]
        for row in table:
            table_lines.append(
                f"{turbine_id},{row.n_clusters},{_fmt(row.minimum)},{_fmt(row.q1)},"
                f"{_fmt(row.median)},{_fmt(row.mean)},{_fmt(row.q3)},{_fmt(row.maximum)}"
            )

    with open(cfg.artifacts_dir / LABELS_FILE, "w") as fh:
        fh.write("turbine,epoch_start,cluster,silhouette,mean_wind_speed\n")
        fh.write("\n".join(label_lines) + "\n")
    _write_json(cfg.artifacts_dir / CENTROIDS_FILE, centroids_doc)
    _write_json(cfg.artifacts_dir / DENDROGRAMS_FILE, dendro_doc)
    with open(cfg.artifacts_dir / SIL_TABLE_FILE, "w") as fh:
        fh.write("turbine,n_clusters,min,q1,median,mean,q3,max\n")
        if table_lines:
            fh.write("\n".join(table_lines) + "\n")
    return {
        "command": "cluster",
        "n_clusters": cfg.n_clusters,
        "epochs_clustered": clustered,
        "turbines_skipped": skipped,
        "artifacts": [LABELS_FILE, CENTROIDS_FILE, DENDROGRAMS_FILE, SIL_TABLE_FILE],
    }


def _read_labels(cfg: RunConfig) -> dict[str, list[dict]]:
    """Cluster labels grouped by turbine, in file order."""
    path = cfg.artifacts_dir / LABELS_FILE
    if not path.is_file():
        raise DataError(f"no cluster labels at {path}; run the cluster command first")
    grouped: dict[str, list[dict]] = {}
    with open(path) as fh:
        for row in csv.DictReader(fh):
            grouped.setdefault(row["turbine"], []).append(
                {
                    "epoch_start": row["epoch_start"],
                    "cluster": int(row["cluster"]),
                    "silhouette": float(row["silhouette"]),
                    "wind": float(row["mean_wind_speed"]),
                }
            )
    if not grouped:
        raise DataError(f"cluster labels file {path} is empty")
    return grouped


def _retained_keys(cfg: RunConfig, grouped: dict[str, list[dict]]) -> set:
    """(turbine, epoch_start) keys surviving the per-turbine silhouette filter."""
    retained = set()
    for turbine_id, rows in grouped.items():
        scores = {(turbine_id, r["epoch_start"]): r["silhouette"] for r in rows}
        retained |= filter_by_silhouette_quartile(scores, cfg.quantile)
    return retained


def _gaussian_doc(turbine_id: str, rows: list[dict]) -> dict:
    """Per-turbine Gaussian fits and the boundaries between adjacent clusters."""
    winds_by_cluster: dict[int, list[float]] = {}
    for r in rows:
        winds_by_cluster.setdefault(r["cluster"], []).append(r["wind"])
    fits = fit_gaussians(winds_by_cluster)
    doc: dict = {
        "method": GAUSSIAN_METHOD,
        "units": "v_nom_reference",
        "v1": None,
        "v2": None,
        "v_nom": None,
        "fits": {
            str(c): {"mean": f.mean, "std": f.std, "count": f.count}
            for c, f in sorted(fits.items())
        },
        "boundaries": {},
    }
    ordered = sorted(fits)
    for low, high in zip(ordered, ordered[1:]):
        try:
            doc["boundaries"][f"{low}-{high}"] = gaussian_boundary(fits[low], fits[high])
        except DataError as exc:
            log.warning("turbine %s: no boundary between clusters %d and %d: %s",
                        turbine_id, low, high, exc)
            doc["boundaries"][f"{low}-{high}"] = None
    # with canonical three-cluster labels the two boundaries are v2 and v_nom
    if ordered == [1, 2, 3]:
        doc["v2"] = doc["boundaries"]["1-2"]
        doc["v_nom"] = doc["boundaries"]["2-3"]
    return doc


def run_boundaries(cfg: RunConfig) -> dict:
    """Fit per-turbine Gaussian boundaries and the pooled histogram model."""
    grouped = _read_labels(cfg)
    retained = _retained_keys(cfg, grouped)
    cfg.artifacts_dir.mkdir(parents=True, exist_ok=True)

    per_turbine = {}
    pooled_winds: list[float] = []
    pooled_clusters: list[int] = []
    for turbine_id in sorted(grouped):
        rows = [
            r for r in grouped[turbine_id]
            if (turbine_id, r["epoch_start"]) in retained
        ]
        per_turbine[turbine_id] = _gaussian_doc(turbine_id, rows)
        pooled_winds.extend(r["wind"] for r in rows)
        pooled_clusters.extend(r["cluster"] for r in rows)

    hist = build_histograms(pooled_winds, pooled_clusters, cfg.bin_width)
    pooled = ml_boundaries(hist, cfg.persistence)
    _write_json(cfg.artifacts_dir / BOUNDARIES_FILE, pooled.to_doc())
    _write_json(cfg.artifacts_dir / PER_TURBINE_FILE, per_turbine)
    return {
        "command": "boundaries",
        "pooled": pooled.to_doc(),
        "per_turbine": per_turbine,
        "epochs_retained": len(pooled_winds),
        "epochs_total": sum(len(rows) for rows in grouped.values()),
        "artifacts": [BOUNDARIES_FILE, PER_TURBINE_FILE],
    }


def run_assign(cfg: RunConfig) -> dict:
    """Assign model states from the boundary model and report change rates."""
    grouped = _read_labels(cfg)
    boundaries_path = cfg.boundaries_file
    if not boundaries_path.is_file():
        raise DataError(
            f"no boundary model at {boundaries_path}; run the boundaries command first"
        )
    model = StateBoundaries.from_doc(_read_json(boundaries_path))
    retained = _retained_keys(cfg, grouped)
    cfg.artifacts_dir.mkdir(parents=True, exist_ok=True)

    assign_lines = []
    cluster_by_key: dict = {}
    model_by_key: dict = {}
    for turbine_id in sorted(grouped):
        for r in grouped[turbine_id]:
            key = (turbine_id, r["epoch_start"])
            state = assign_cluster_state(r["wind"], model)
            cluster_by_key[key] = r["cluster"]
            model_by_key[key] = state
            changed = "true" if state != r["cluster"] else "false"
            assign_lines.append(
                f"{turbine_id},{r['epoch_start']},{_fmt(r['wind'])},"
                f"{r['cluster']},{state},{changed}"
            )

    overall = allocation_change_rate(cluster_by_key, model_by_key)
    filtered = allocation_change_rate(cluster_by_key, model_by_key, restrict_to=retained)
    per_turbine = {}
    for turbine_id, rows in sorted(grouped.items()):
        keys = {(turbine_id, r["epoch_start"]) for r in rows}
        sub_cluster = {k: cluster_by_key[k] for k in keys}
        sub_model = {k: model_by_key[k] for k in keys}
        per_turbine[turbine_id] = {
            "n_epochs": len(keys),
            "change_rate": allocation_change_rate(sub_cluster, sub_model),
            "n_filtered": len(keys & retained),
            "filtered_change_rate": allocation_change_rate(
                sub_cluster, sub_model, restrict_to=retained
            ),
        }

    with open(cfg.artifacts_dir / ASSIGNMENTS_FILE, "w") as fh:
        fh.write("turbine,epoch_start,mean_wind_speed,cluster,model_state,changed\n")
        fh.write("\n".join(assign_lines) + "\n")
    with open(cfg.artifacts_dir / CHANGE_RATES_FILE, "w") as fh:
        fh.write("turbine,n_epochs,change_rate,n_filtered,filtered_change_rate\n")
        for turbine_id, row in per_turbine.items():
            fh.write(
                f"{turbine_id},{row['n_epochs']},{_fmt(row['change_rate'])},"
                f"{row['n_filtered']},{_fmt(row['filtered_change_rate'])}\n"
            )
    _write_rate_histogram(cfg.artifacts_dir / RATE_HIST_FILE, per_turbine)

    report = {
        "change_rate": overall,
        "filtered_change_rate": filtered,
        "n_epochs": len(cluster_by_key),
        "n_filtered": len(retained),
        "per_turbine": per_turbine,
        "boundaries": model.to_doc(),
    }
    _write_json(cfg.artifacts_dir / ALLOCATION_FILE, report)
    return {
        "command": "assign",
        **report,
        "artifacts": [ASSIGNMENTS_FILE, CHANGE_RATES_FILE, RATE_HIST_FILE, ALLOCATION_FILE],
    }


def _write_rate_histogram(path: Path, per_turbine: dict) -> None:
    """Histogram of per-turbine change rates, plot-ready."""
    rates = [row["change_rate"] for row in per_turbine.values()]
    filtered = [row["filtered_change_rate"] for row in per_turbine.values()]
    top = max(rates + filtered, default=0.0)
    n_bins = int(np.floor(top / RATE_HIST_BIN)) + 1
    with open(path, "w") as fh:
        fh.write("bin_left,bin_right,count,filtered_count\n")
        for b in range(n_bins):
            lo, hi = b * RATE_HIST_BIN, (b + 1) * RATE_HIST_BIN
            count = sum(1 for r in rates if lo <= r < hi)
            fcount = sum(1 for r in filtered if lo <= r < hi)
            fh.write(f"{_fmt(lo)},{_fmt(hi)},{count},{fcount}\n")


def run_report(cfg: RunConfig) -> dict:
    """Aggregate whatever artifacts exist into one report document."""
    art = cfg.artifacts_dir
    report: dict = {"sections": []}

    summary_path = art / SUMMARY_FILE
    if summary_path.is_file():
        totals: dict[str, dict] = {}
        with open(summary_path) as fh:
            for row in csv.DictReader(fh):
                t = totals.setdefault(row["turbine"], {"epochs": 0, "valid": 0})
                t["epochs"] += 1
                t["valid"] += row["valid"] == "true"
        report["epochs"] = {
            "per_turbine": totals,
            "total": sum(t["epochs"] for t in totals.values()),
            "valid": sum(t["valid"] for t in totals.values()),
        }
        report["sections"].append("epochs")

    labels_path = art / LABELS_FILE
    if labels_path.is_file():
        sizes: dict[str, int] = {}
        with open(labels_path) as fh:
            for row in csv.DictReader(fh):
                sizes[row["cluster"]] = sizes.get(row["cluster"], 0) + 1
        report["clusters"] = {"sizes": sizes, "epochs": sum(sizes.values())}
        report["sections"].append("clusters")

    table_path = art / SIL_TABLE_FILE
    if table_path.is_file():
        with open(table_path) as fh:
            report["silhouette_table"] = list(csv.DictReader(fh))
        report["sections"].append("silhouette_table")

    boundaries_path = art / BOUNDARIES_FILE
    if boundaries_path.is_file():
        report["boundaries"] = _read_json(boundaries_path)
        report["sections"].append("boundaries")

    allocation_path = art / ALLOCATION_FILE
    if allocation_path.is_file():
        report["allocation"] = _read_json(allocation_path)
        report["sections"].append("allocation")

    mismatch_files = sorted(cfg.data_path.glob("*.mismatches.csv")) if cfg.data_path.is_dir() else []
    if mismatch_files:
        injected = 0
        for p in mismatch_files:
            with open(p) as fh:
                injected += sum(1 for _ in fh) - 1
        report["mismatches"] = {"injected_epochs": injected}
        report["sections"].append("mismatches")

    if not report["sections"]:
        raise DataError(f"no artifacts found under {art}; run the pipeline first")
    _write_json(art / REPORT_FILE, report)
    return {"command": "report", "artifacts": [REPORT_FILE], **report}
