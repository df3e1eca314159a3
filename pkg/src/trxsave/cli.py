"""Command-line front end: generate | cluster | assign | simulate | report.

One root ``--seed`` drives every random draw; child seeds are split off
deterministically per cell and per clustering restart, so a single integer
reproduces a whole study byte for byte.

Exit codes: 0 success, 2 usage or configuration, 3 data or parse, 4 internal
invariant violation.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import analytics, evaluator, traffic, tuner
from .cell_model import CellConfig, MappingStrategy
from .errors import ConfigurationError, DataError, InvariantError
from .saving_engine import PowerSavingParams, validate_params

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4

FLEET_SCHEMA_VERSION = 1

# seed split domains
_SEED_TRACE = 1
_SEED_TIER = 2


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigurationError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except DataError as exc:
            _fail(EXIT_DATA, str(exc))
        except InvariantError as exc:
            _fail(EXIT_INVARIANT, str(exc))
        except OSError as exc:
            _fail(EXIT_DATA, str(exc))
    return wrapper


def apply_config_file(ctx: click.Context, param: click.Parameter, value):
    """Fill defaults from a JSON config file; explicit flags win."""
    if value is None:
        return None
    try:
        with open(value, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config file {value}: {exc}")
    if not isinstance(data, dict):
        raise click.UsageError(f"config file {value} must hold a JSON object")
    # config keys may use either the flag spelling (--cells) or the parameter name
    key_to_name = {}
    for p in ctx.command.params:
        key_to_name[p.name] = p.name
        for opt in getattr(p, "opts", []):
            key_to_name[opt.lstrip("-").replace("-", "_")] = p.name
    defaults = dict(ctx.default_map or {})
    for key, val in data.items():
        name = key_to_name.get(key.replace("-", "_"))
        if name is None:
            raise click.UsageError(f"unknown config key {key!r} in {value}")
        defaults.setdefault(name, val)
    ctx.default_map = defaults
    return value


config_option = click.option(
    "--config", type=click.Path(exists=True, dir_okay=False), callback=apply_config_file,
    is_eager=True, expose_value=False,
    help="JSON file with default option values (explicit flags win).",
)


@click.group()
@click.version_option(package_name="trxsave")
def main() -> None:
    """BTS power-saving simulator and hysteresis tuning pipeline."""


# ---------------------------------------------------------------------------
# Fleet generation

# tier name -> (share, num_trx, base range, peak range, sigma range)
FLEET_TIERS = {
    "low": (0.34, 3, (0.05, 0.4), (1.5, 3.0), (0.10, 0.30)),
    "medium": (0.26, 3, (0.5, 1.2), (4.5, 6.5), (0.20, 0.50)),
    "high": (0.24, 4, (7.0, 8.5), (10.5, 13.0), (0.20, 0.50)),
    "saturated": (0.16, 4, (31.0, 33.0), (34.0, 38.0), (0.10, 0.30)),
}


def build_demo_fleet(
    n_cells: int, days: int, seed: int, scan_period_s: float = 10.0
) -> tuple[list[dict], list[traffic.TrafficTrace], list[traffic.KpiRecord]]:
    """Deterministic desk-scale fleet: cell configs, traces, synthetic KPIs.

    Cells fall into four traffic tiers (low, medium, high, saturated); the
    saturated tier offers more Erlang than it has traffic channels at every
    scan, modelling permanently congested sites.
    """
    if n_cells < 1:
        raise ConfigurationError(f"need at least 1 cell, got {n_cells}")
    if days < 1:
        raise ConfigurationError(f"need at least 1 day, got {days}")

    counts = {}
    remaining = n_cells
    names = list(FLEET_TIERS)
    for name in names[1:]:
        counts[name] = int(round(FLEET_TIERS[name][0] * n_cells))
        remaining -= counts[name]
    counts[names[0]] = max(0, remaining)

    cells: list[dict] = []
    traces: list[traffic.TrafficTrace] = []
    kpis: list[traffic.KpiRecord] = []
    index = 0
    for tier in names:
        share, num_trx, base_rng, peak_rng, sigma_rng = FLEET_TIERS[tier]
        for _ in range(counts.get(tier, 0)):
            cell_id = f"cell_{index:04d}"
            rng = np.random.default_rng(analytics.child_seed(seed, _SEED_TIER, index))
            base = float(rng.uniform(*base_rng))
            peak = float(rng.uniform(*peak_rng))
            sigma = float(rng.uniform(*sigma_rng))
            spec = traffic.DiurnalProfileSpec(
                base_erlang=base,
                peak_erlang=peak,
                peak_hour=int(rng.integers(11, 20)),
                trough_hour=int(rng.integers(2, 5)),
                noise_sigma=sigma,
                days=days,
                seed=analytics.child_seed(seed, _SEED_TRACE, index),
                scan_period_s=scan_period_s,
            )
            config = CellConfig(cell_id=cell_id, num_trx=num_trx, cch_slots=3)
            trace = traffic.generate_diurnal_trace(spec, cell_id=cell_id)
            cells.append({
                "cell_id": cell_id,
                "num_trx": num_trx,
                "cch_slots": 3,
                "tier": tier,
            })
            traces.append(trace)
            kpis.append(traffic.trace_to_kpis(trace, config))
            index += 1
    return cells, traces, kpis


def write_fleet_json(path: Path, cells: list[dict], seed: int, days: int,
                     scan_period_s: float) -> None:
    doc = {
        "schema_version": FLEET_SCHEMA_VERSION,
        "synthetic": True,
        "seed": seed,
        "days": days,
        "scan_period_s": scan_period_s,
        "cells": cells,
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_fleet_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if "cells" not in doc:
        raise DataError(f"{path}: missing 'cells'")
    return doc


@main.command()
@config_option
@click.option("--cells", "n_cells", type=int, default=12, show_default=True,
              help="Number of cells in the fleet.")
@click.option("--days", type=int, default=2, show_default=True,
              help="Simulated days per trace.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scan-period", type=float, default=10.0, show_default=True,
              help="Seconds between scans.")
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
@handle_errors
def generate(n_cells: int, days: int, seed: int, scan_period: float, out: str) -> None:
    """Write a synthetic fleet: fleet.json, traffic.csv, kpis.csv."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells, traces, kpis = build_demo_fleet(n_cells, days, seed, scan_period)
    write_fleet_json(out_dir / "fleet.json", cells, seed, days, scan_period)
    traffic.write_traffic_csv(traces, out_dir / "traffic.csv")
    traffic.emit_kpi_csv(kpis, out_dir / "kpis.csv")
    click.echo(f"wrote {len(cells)} cells x {days} day(s) to {out_dir}")


# ---------------------------------------------------------------------------
# Clustering


@main.command()
@config_option
@click.option("--kpi", "kpi_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--k", type=int, default=None, help="Fix the cluster count (skips selection).")
@click.option("--k-min", type=int, default=2, show_default=True)
@click.option("--k-max", type=int, default=9, show_default=True)
@click.option("--restarts", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
@handle_errors
def cluster(kpi_path: str, k: Optional[int], k_min: int, k_max: int,
            restarts: int, seed: int, out: str) -> None:
    """Standardize, reduce to 3 features, cluster; write clusters/elbow/silhouette CSVs."""
    records = traffic.ingest_kpi_csv(kpi_path)
    matrix = analytics.kpi_feature_matrix(records)
    standardized, _ = analytics.standardize(matrix)
    reduced, _ = analytics.pca_reduce(standardized, n_components=3)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    elbow_max = min(10, reduced.n_rows)
    elbow = analytics.elbow_curve(reduced, range(1, elbow_max + 1), restarts=restarts, seed=seed)
    analytics.write_elbow_csv(elbow, out_dir / "elbow.csv")

    sil_max = min(k_max, reduced.n_rows)
    selection = analytics.select_k(reduced, range(k_min, sil_max + 1), restarts=restarts, seed=seed)
    analytics.write_silhouette_csv(selection.curve, out_dir / "silhouette.csv")

    if k is not None:
        if not 1 <= k <= reduced.n_rows:
            raise ConfigurationError(f"--k {k} must be in [1, {reduced.n_rows}]")
        chosen = analytics.run_kmeans(reduced, k, seed=seed, restarts=restarts)
    else:
        chosen = selection.best_result
    analytics.write_clusters_csv(reduced.row_ids, chosen.labels, out_dir / "clusters.csv")

    sil = analytics.silhouette_score(reduced, chosen.labels) if chosen.k >= 2 else 0.0
    with open(out_dir / "clustering.json", "w", encoding="utf-8", newline="") as fh:
        json.dump({
            "schema_version": 1,
            "seed": seed,
            "restarts": restarts,
            "k": chosen.k,
            "sse": chosen.sse,
            "silhouette": sil,
            "iterations": chosen.iterations,
            "suggested_knee": elbow.suggested_knee,
        }, fh, indent=2)
        fh.write("\n")
    click.echo(f"clustered {reduced.n_rows} cells into k={chosen.k} (silhouette {sil:.4f})")


@main.command()
@config_option
@click.option("--clusters", "clusters_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--kpi", "kpi_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--policy", default="4,6,12", show_default=True,
              help="Comma-separated hysteresis values, least severe cluster first.")
@click.option("--severity", type=click.Choice(["traffic", "composite"]), default="traffic",
              show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
@handle_errors
def assign(clusters_path: str, kpi_path: str, policy: str, severity: str, out: str) -> None:
    """Map clusters to hysteresis values; write assignment.csv and param_push.csv."""
    try:
        values = tuple(int(v) for v in policy.split(","))
    except ValueError:
        raise ConfigurationError(f"bad --policy {policy!r}: expected comma-separated integers")
    labels = analytics.read_clusters_csv(clusters_path)
    records = traffic.ingest_kpi_csv(kpi_path)
    by_id = {r.cell_id: r for r in records}
    missing = [c for c in labels if c not in by_id]
    if missing:
        raise DataError(f"cells in cluster CSV missing from KPI CSV: {missing[:5]}")

    ordered = [by_id[c] for c in labels]
    label_array = np.asarray([labels[r.cell_id] for r in ordered])
    k = int(label_array.max()) + 1
    pseudo = analytics.ClusteringResult(
        k=k, labels=label_array, centroids=np.zeros((k, 1)), sse=0.0, iterations=0, seed=0,
    )
    profiles = tuner.profile_clusters(pseudo, ordered)
    assignment = tuner.rank_and_assign(
        profiles, tuner.HysteresisPolicy(values=values, severity=severity), labels
    )

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tuner.write_assignment_csv(assignment, out_dir / "assignment.csv")
    tuner.write_push_csv(assignment, out_dir / "param_push.csv")
    click.echo(f"assigned hysteresis for {len(assignment.hysteresis)} cells")


# ---------------------------------------------------------------------------
# Simulation


def _load_scenario(
    fleet_path: str,
    traffic_path: str,
    assignment_path: Optional[str],
    default_hysteresis: Optional[int],
    params: PowerSavingParams,
    seed: int,
    warmup_days: float,
) -> evaluator.NetworkScenario:
    fleet = read_fleet_json(Path(fleet_path))
    scan_period = float(fleet.get("scan_period_s", 10.0))
    cells = [
        CellConfig(cell_id=c["cell_id"], num_trx=int(c["num_trx"]),
                   cch_slots=int(c.get("cch_slots", 3)))
        for c in fleet["cells"]
    ]
    traces = {t.cell_id: t for t in traffic.read_traffic_csv(traffic_path, scan_period)}
    hysteresis = {}
    if assignment_path:
        hysteresis = dict(tuner.read_assignment_csv(assignment_path).hysteresis)
    warmup_scans = int(round(warmup_days * 86400 / scan_period))
    return evaluator.NetworkScenario(
        cells=cells,
        traces=traces,
        base_params=params,
        hysteresis=hysteresis,
        default_hysteresis=default_hysteresis,
        strategy=MappingStrategy.packed(),
        seed=seed,
        warmup_scans=warmup_scans,
    ).validate()


@main.command()
@config_option
@click.option("--fleet", "fleet_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--traffic", "traffic_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--assignment", "assignment_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Per-cell hysteresis CSV from the assign step.")
@click.option("--hysteresis", type=int, default=None,
              help="Default hysteresis for cells without an assignment.")
@click.option("--off-target", type=int, default=50, show_default=True)
@click.option("--on-target", type=int, default=49, show_default=True)
@click.option("--off-delay", type=int, default=30, show_default=True)
@click.option("--ps", type=click.Choice(["both", "on", "off"]), default="both", show_default=True)
@click.option("--warmup-days", type=float, default=0.0, show_default=True,
              help="Days excluded from statistics (cold-start ramp).")
@click.option("--timelines", default="8", show_default=True,
              help="How many per-cell timeline CSVs to write ('all' or a count).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
@handle_errors
def simulate(fleet_path: str, traffic_path: str, assignment_path: Optional[str],
             hysteresis: Optional[int], off_target: int, on_target: int, off_delay: int,
             ps: str, warmup_days: float, timelines: str, seed: int, out: str) -> None:
    """Run the fleet with/without power saving and write comparison reports."""
    if assignment_path is None and hysteresis is None:
        hysteresis = PowerSavingParams().hysteresis
    params = validate_params(PowerSavingParams(
        trx_off_target=off_target, trx_on_target=on_target, trx_off_delay=off_delay,
        hysteresis=PowerSavingParams().hysteresis,
    ))
    scenario = _load_scenario(
        fleet_path, traffic_path, assignment_path, hysteresis, params, seed, warmup_days,
    )
    if timelines == "all":
        n_timelines = len(scenario.cells)
    else:
        try:
            n_timelines = int(timelines)
        except ValueError:
            raise ConfigurationError(f"--timelines must be 'all' or an integer, got {timelines!r}")

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs: dict[str, dict] = {}
    for mode in ("off", "on") if ps == "both" else (ps,):
        timelines_map = evaluator.simulate_network(scenario, ps_enabled=(mode == "on"))
        report = evaluator.summarize(
            timelines_map, ps_enabled=(mode == "on"),
            warmup_scans=scenario.warmup_scans,
        )
        runs[mode] = {"timelines": timelines_map, "report": report}
        if n_timelines:
            tl_dir = out_dir / "timelines"
            tl_dir.mkdir(exist_ok=True)
            for cell_id in sorted(timelines_map)[:n_timelines]:
                evaluator.write_timeline_csv(
                    timelines_map[cell_id], tl_dir / f"{cell_id}_{mode}.csv"
                )

    metadata = {
        "seed": seed,
        "warmup_scans": scenario.warmup_scans,
        "params": dataclasses.asdict(params),
        "default_hysteresis": hysteresis,
        "n_cells": len(scenario.cells),
    }
    if ps == "both":
        summary = evaluator.compare(runs["on"]["report"], runs["off"]["report"], metadata)
        evaluator.emit_report(summary, out_dir)
        click.echo(f"active TRX reduction: {summary.reduction_pct:.1f}%")
        click.echo(f"blocking delta: {summary.blocking_delta:+d}")
    else:
        report = runs[ps]["report"]
        with open(out_dir / f"report_{ps}.json", "w", encoding="utf-8", newline="") as fh:
            doc = dataclasses.asdict(report)
            doc["metadata"] = metadata
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        click.echo(f"ps={ps}: {report.trx_scans} active TRX-scans over {len(scenario.cells)} cells")


@main.command()
@config_option
@click.option("--summary", "summary_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@handle_errors
def report(summary_path: str) -> None:
    """Pretty-print a summary.json produced by simulate."""
    summary = evaluator.read_summary_json(summary_path)
    click.echo(f"{'cell_id':<12} {'ts_before':>9} {'max_ts_after':>12}")
    for row in summary.rows:
        click.echo(f"{row.cell_id:<12} {row.ts_before:>9} {row.max_ts_after:>12}")
    click.echo(f"total active TRX-scans without saving: {summary.trx_scans_without}")
    click.echo(f"total active TRX-scans with saving:    {summary.trx_scans_with}")
    click.echo(f"active TRX reduction: {summary.reduction_pct:.1f}%")
    click.echo(f"blocking delta: {summary.blocking_delta:+d}")


if __name__ == "__main__":
    main()
