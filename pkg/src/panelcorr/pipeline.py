"""End-to-end orchestration: run all analysis stages per window and emit artifacts.

A run writes one JSON per window plus regime and timeline JSONs under the
configured output directory, followed by a manifest listing every artifact with
its SHA-256.  Identical configuration and seed give byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._version import __version__
from . import corrlab
from .clustering import assign_symbols, consensus_partition, information_ratio, modularity, Partition
from .ingest import (
    CsvSchema,
    PricePanel,
    Quarter,
    load_schema,
    log_returns,
    national_return_series,
    parse_price_csv,
    windows,
)
from .market_effect import (
    MarketEffectSeries,
    detect_regime_shifts,
    eigenportfolio_returns,
    ols_coefficient,
    robust_coefficient,
)
from .seriation import AnnealSchedule, anneal_order
from .spectra import (
    absorption_ratio,
    deviating_eigenvalues,
    eigendecompose,
    mp_bounds,
    negative_component_weight,
    null_spectrum,
)
from .tracking import color_timeline

__all__ = ["RunConfig", "StageError", "run_pipeline", "write_report", "ALL_STAGES"]

ALL_STAGES = ("spectra", "market", "clusters", "tracking")

_STAGE_SEED = {"null": 1, "seriation": 2, "consensus": 3}


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage and window."""


@dataclass
class RunConfig:
    """All knobs of a pipeline run; ``seed`` is mandatory for reproducibility."""

    seed: int
    out_dir: str | Path = "run"
    input: str | Path | None = None
    schema: str | Path | None = None
    national: str | Path | None = None

    size_s: int = 60
    alpha: float = 0.05
    null_rounds: int = 1000
    null_method: str = "pooled"

    restarts: int = 200
    sa_t0: float | None = None
    sa_alpha: float = 0.995
    sa_moves_per_temp: int | None = None
    sa_patience: int = 5
    sa_max_temperatures: int = 5000

    min_gain: float | None = None
    affinity_min_gain: float = 0.5
    v_threshold: float = 0.05
    regime_threshold: float = 0.25
    n_tracked: int = 4
    n_absorption: int = 5

    horizon: int = 6
    interval_split: str = "1996Q2"
    reference_start: str = "1997Q1"
    reference_end: str = "1998Q3"

    dump_matrices: bool = False

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a seed is mandatory for reproducible runs")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.null_rounds < 1 or self.restarts < 1:
            raise ValueError("null_rounds and restarts must be >= 1")
        if self.n_tracked < 1 or self.n_absorption < 1:
            raise ValueError("n_tracked and n_absorption must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def schedule(self) -> AnnealSchedule:
        return AnnealSchedule(
            t0=self.sa_t0,
            alpha=self.sa_alpha,
            moves_per_temp=self.sa_moves_per_temp,
            patience=self.sa_patience,
            max_temperatures=self.sa_max_temperatures,
        )


def _derive_seed(seed: int, stage: str, branch: int) -> int:
    ss = np.random.SeedSequence(
        [int(seed) & 0xFFFFFFFFFFFFFFFF, _STAGE_SEED[stage], int(branch)]
    )
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, Quarter):
        return str(obj)
    return obj


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonify(payload), sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_inputs(config: RunConfig, panel: PricePanel | None):
    if panel is None:
        if config.input is None:
            raise ValueError("run needs either an input CSV path or an in-memory panel")
        schema = load_schema(config.schema) if config.schema else CsvSchema()
        panel = parse_price_csv(config.input, schema)
    returns = log_returns(panel)
    override = None
    if config.national is not None:
        override = _load_national(config.national)
    market = national_return_series(returns, override)
    return panel, returns, market


def _load_national(path: str | Path) -> dict[Quarter, float]:
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames is None or not {"quarter", "value"} <= set(reader.fieldnames):
            raise ValueError("national override CSV needs 'quarter' and 'value' columns")
        return {Quarter.parse(row["quarter"]): float(row["value"]) for row in reader}


def run_pipeline(
    config: RunConfig,
    panel: PricePanel | None = None,
    stages: Sequence[str] = ALL_STAGES,
) -> dict:
    """Execute the selected stages over every window and write all artifacts.

    Returns the manifest (also written to ``manifest.json``).  Any stage error
    aborts the run with the failing stage and window named.
    """
    unknown = set(stages) - set(ALL_STAGES)
    if unknown:
        raise ValueError(f"unknown stages: {sorted(unknown)}")
    if "tracking" in stages and "clusters" not in stages:
        raise ValueError("tracking requires the clusters stage")
    t_start = time.perf_counter()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    panel, returns, market = _load_inputs(config, panel)
    specs = windows(returns, config.size_s)
    schedule = config.schedule()
    bounds = mp_bounds(config.size_s / returns.n_entities)
    critical = corrlab.corr_critical_value(config.size_s, config.alpha)

    artifacts: list[Path] = []
    partitions: list[Partition] = []
    previous = None
    records = []
    for w, spec in enumerate(specs):
        record = {
            "window_end": str(spec.end_quarter),
            "window_size": spec.size_s,
            "entities": list(returns.entities),
            "stages": sorted(stages),
        }
        end = str(spec.end_quarter)

        def fail(stage, exc):
            raise StageError(f"stage '{stage}' failed at window {end}: {exc}") from exc

        try:
            C = corrlab.pearson_matrix(returns, spec)
            mean, std = corrlab.mean_correlation(C)
            record["mean_correlation"] = {
                "mean": mean, "std": std, "critical_value": critical,
            }
            decomp = eigendecompose(C, previous=previous)
            previous = decomp
            V = negative_component_weight(decomp.vector(1))
            record["negative_component_weight"] = V
        except StageError:
            raise
        except Exception as exc:  # noqa: BLE001 - single funnel for stage tagging
            fail("corrlab", exc)

        if "spectra" in stages:
            try:
                null = null_spectrum(
                    returns, spec, rounds=config.null_rounds,
                    seed=_derive_seed(config.seed, "null", w), method=config.null_method,
                )
                deviating = deviating_eigenvalues(decomp, bounds, null)
                record["eigenvalues"] = decomp.eigenvalues
                record["eigenvector_components"] = {
                    str(n): decomp.vector(n) for n in range(1, config.n_tracked + 1)
                }
                record["mp"] = {
                    "q_ratio": bounds.q_ratio,
                    "lambda_min": bounds.lambda_min,
                    "lambda_max": bounds.lambda_max,
                }
                record["null"] = {
                    "rounds": null.rounds,
                    "method": null.method,
                    "lambda_5pct": null.lambda_5pct,
                }
                record["deviating"] = {
                    "above_mp": list(deviating.above_mp),
                    "above_null": list(deviating.above_null),
                }
                record["absorption"] = {
                    str(n): absorption_ratio(decomp, n)
                    for n in range(1, min(config.n_absorption, decomp.n) + 1)
                }
            except Exception as exc:  # noqa: BLE001
                fail("spectra", exc)

        if "market" in stages:
            try:
                end_idx = returns.quarter_index(spec.end_quarter)
                m = market[end_idx - spec.size_s + 1 : end_idx + 1]
                k_ols, k_rob = [], []
                for n in range(1, config.n_tracked + 1):
                    rn = eigenportfolio_returns(decomp.vector(n), returns, spec)
                    k_ols.append(ols_coefficient(rn, m))
                    k_rob.append(robust_coefficient(rn, m))
                record["market_effect"] = {"k_ols": k_ols, "k_robust": k_rob}
            except Exception as exc:  # noqa: BLE001
                fail("market_effect", exc)

        if "clusters" in stages:
            try:
                P = corrlab.partial_correlation_matrix(returns, spec, market)
                order = anneal_order(
                    P, schedule=schedule, restarts=1,
                    seed=_derive_seed(config.seed, "seriation", w),
                )
                record["seriation"] = {
                    "order": order.apply_labels(P.entities),
                    "cost": order.cost,
                    "seed": order.seed,
                }
                partition, affinity = consensus_partition(
                    P,
                    restarts=config.restarts,
                    seed=_derive_seed(config.seed, "consensus", w),
                    schedule=schedule,
                    min_gain=config.min_gain,
                    affinity_min_gain=config.affinity_min_gain,
                )
                partitions.append(partition)
                record["partition"] = {
                    "clusters": partition.clusters,
                    "isolated": partition.isolated,
                    "stable": partition.stable,
                }
                record["modularity"] = modularity(P, partition)
                attribution = []
                pairs = []
                for cluster in partition.clusters:
                    try:
                        g = information_ratio(C, decomp, cluster)
                    except ValueError:
                        attribution.append({"cluster": cluster, "degenerate": True})
                        continue
                    pairs.append((cluster, g))
                for attr in assign_symbols(pairs, V, v_threshold=config.v_threshold):
                    attribution.append({
                        "cluster": attr.cluster,
                        "eigen_index": attr.winning_index,
                        "symbol": attr.symbol,
                        "g": attr.g_values[: config.n_tracked],
                    })
                record["attribution"] = attribution
                if config.dump_matrices:
                    mats = out / "matrices"
                    mats.mkdir(parents=True, exist_ok=True)
                    for name, matrix in (("correlation", C), ("partial", P)):
                        path = mats / f"{end}_{name}.csv"
                        corrlab.matrix_to_csv(matrix, path)
                        artifacts.append(path)
                    path = mats / f"{end}_affinity.csv"
                    np.savetxt(path, affinity.values, delimiter=",")
                    artifacts.append(path)
            except StageError:
                raise
            except Exception as exc:  # noqa: BLE001
                fail("clustering", exc)

        path = out / "windows" / f"{end}.json"
        _write_json(path, record)
        artifacts.append(path)
        records.append(record)

    if "market" in stages:
        series = _series_from_records(records, specs, config)
        timeline = detect_regime_shifts(series, threshold=config.regime_threshold)
        payload = {
            "threshold": timeline.threshold,
            "shifts": [
                {"before": str(s.before), "after": str(s.after),
                 "eigen_index": s.eigen_index, "delta": s.delta}
                for s in timeline.shifts
            ],
            "regimes": [{"start": str(a), "end": str(b)} for a, b in timeline.regimes],
        }
        path = out / "regimes.json"
        _write_json(path, payload)
        artifacts.append(path)

    if "tracking" in stages:
        configs = color_timeline(
            partitions,
            interval_split=Quarter.parse(config.interval_split),
            reference_range=(Quarter.parse(config.reference_start),
                             Quarter.parse(config.reference_end)),
            horizon=config.horizon,
        )
        payload = {
            "entities": list(returns.entities),
            "palette": {str(k): v for k, v in (configs[0].palette or {}).items()},
            "windows": [
                {"window_end": str(c.window.end_quarter), "labels": c.labels}
                for c in configs
            ],
        }
        path = out / "timeline.json"
        _write_json(path, payload)
        artifacts.append(path)

    manifest = {
        "config": _jsonify({k: str(v) if isinstance(v, Path) else v
                            for k, v in vars(config).items()}),
        "seed": config.seed,
        "stages": sorted(stages),
        "versions": {"panelcorr": __version__, "numpy": np.__version__},
        "n_windows": len(specs),
        "wall_time_s": round(time.perf_counter() - t_start, 3),
        "artifacts": [
            {"path": str(p.relative_to(out)), "sha256": _sha256(p), "bytes": p.stat().st_size}
            for p in artifacts
        ],
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def _series_from_records(records, specs, config: RunConfig):
    k_ols = np.array([r["market_effect"]["k_ols"] for r in records])
    k_rob = np.array([r["market_effect"]["k_robust"] for r in records])
    return MarketEffectSeries([s.end_quarter for s in specs], config.size_s, k_ols, k_rob)


def _read_manifest(run_dir: str | Path) -> tuple[Path, dict]:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {run_dir}; not a completed run")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    missing = [a["path"] for a in manifest["artifacts"] if not (run_dir / a["path"]).exists()]
    if missing:
        raise FileNotFoundError(f"run is incomplete; missing artifacts: {missing[:5]}")
    return run_dir, manifest


def write_report(run_dir: str | Path) -> list[Path]:
    """Emit plot-ready summary CSVs from a completed run directory.

    One file per figure family: mean correlation, top eigenvalues with both
    null lines, absorption ratios, market coefficients with shift flags,
    eigenvector components, and the cluster timeline.
    """
    run_dir, manifest = _read_manifest(run_dir)
    window_paths = sorted((run_dir / "windows").glob("*.json"),
                          key=lambda p: Quarter.parse(p.stem))
    if not window_paths:
        raise FileNotFoundError(f"run under {run_dir} has no window artifacts")
    records = [json.loads(p.read_text(encoding="utf-8")) for p in window_paths]
    report = run_dir / "report"
    report.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, header: list[str], rows: list[list]) -> None:
        path = report / name
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_csv_cell(v) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)

    rows = [[r["window_end"], r["mean_correlation"]["mean"], r["mean_correlation"]["std"],
             r["mean_correlation"]["critical_value"]] for r in records]
    emit("mean_correlation.csv", ["window", "mean", "std", "critical_value"], rows)

    spectral = [r for r in records if "eigenvalues" in r]
    if spectral:
        n_top = min(5, len(spectral[0]["eigenvalues"]))
        header = ["window"] + [f"lambda_{i}" for i in range(1, n_top + 1)] + \
                 ["lambda_max_mp", "lambda_5pct"]
        rows = [[r["window_end"], *r["eigenvalues"][:n_top],
                 r["mp"]["lambda_max"], r["null"]["lambda_5pct"]] for r in spectral]
        emit("eigenvalues.csv", header, rows)

        ns = sorted(spectral[0]["absorption"], key=int)
        rows = [[r["window_end"]] + [r["absorption"][n] for n in ns] for r in spectral]
        emit("absorption.csv", ["window"] + [f"E_{n}" for n in ns], rows)

        rows = []
        for r in spectral:
            comps = r["eigenvector_components"]
            for i, entity in enumerate(r["entities"]):
                rows.append([r["window_end"], entity] +
                            [comps[n][i] for n in sorted(comps, key=int)])
        ns = sorted(spectral[0]["eigenvector_components"], key=int)
        emit("eigenvector_components.csv",
             ["window", "entity"] + [f"u_{n}" for n in ns], rows)

    market = [r for r in records if "market_effect" in r]
    if market:
        flagged = set()
        regimes_path = run_dir / "regimes.json"
        if regimes_path.exists():
            regimes = json.loads(regimes_path.read_text(encoding="utf-8"))
            flagged = {(s["after"], s["eigen_index"]) for s in regimes["shifts"]}
        rows = []
        for r in market:
            for n, (ko, kr) in enumerate(zip(r["market_effect"]["k_ols"],
                                             r["market_effect"]["k_robust"]), start=1):
                rows.append([r["window_end"], n, ko, kr,
                             int((r["window_end"], n) in flagged)])
        emit("market_effect.csv",
             ["window", "eigen_index", "k_ols", "k_robust", "shift_before"], rows)

    timeline_path = run_dir / "timeline.json"
    if timeline_path.exists():
        timeline = json.loads(timeline_path.read_text(encoding="utf-8"))
        palette = {int(k): v for k, v in timeline["palette"].items()}
        rows = []
        for wrec in timeline["windows"]:
            for entity, label in zip(timeline["entities"], wrec["labels"]):
                rows.append([wrec["window_end"], entity, label,
                             palette.get(label, "") if label else ""])
        emit("cluster_timeline.csv", ["window", "entity", "label", "color"], rows)

    return written


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
