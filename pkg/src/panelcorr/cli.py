"""Command-line entry point.

Verbs: ``ingest`` (parse and validate a price CSV), ``analyze`` (per-window
eigenvalue analysis), ``cluster`` (seriation, consensus clustering, tracking),
``regimes`` (market-effect coefficients and shift detection), ``synth``
(generate a planted-factor panel), ``report`` (plot-ready CSVs from a run
directory), and ``run`` (all stages).  Outputs land in a timestamped directory
unless ``--exact-out`` is given; every run writes a manifest.json.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from ._version import __version__
from .ingest import (
    CsvSchema,
    load_schema,
    log_returns,
    parse_price_csv,
    write_price_csv,
    write_return_csv,
)
from .pipeline import ALL_STAGES, RunConfig, run_pipeline, write_report
from .synth import FactorModelSpec, generate_factor_panel


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="price-index CSV path")
    p.add_argument("--schema", help="key=value schema file mapping CSV columns")
    p.add_argument("--national", help="CSV with quarter,value columns overriding the "
                                      "equal-weight national return series")


def _add_out_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="runs", help="output directory (default: runs/)")
    p.add_argument("--exact-out", action="store_true",
                   help="write directly into --out instead of a timestamped subdirectory")


def _add_run_args(p: argparse.ArgumentParser, clustering: bool = True,
                  spectra: bool = True, market: bool = True) -> None:
    p.add_argument("--seed", type=int, required=True, help="master seed (mandatory)")
    p.add_argument("--s", type=int, default=60, dest="size_s",
                   help="moving-window size in quarters (default 60)")
    p.add_argument("--alpha", type=float, default=0.05,
                   help="significance level for critical values (default 0.05)")
    if spectra:
        p.add_argument("--rounds", type=int, default=1000,
                       help="permutation null rounds (default 1000)")
        p.add_argument("--null-method", choices=["pooled", "round_max"], default="pooled",
                       help="critical-value definition for the permutation null")
    if market:
        p.add_argument("--regime-threshold", type=float, default=0.25,
                       help="|delta k| flagging threshold (default 0.25)")
    if clustering:
        p.add_argument("--restarts", type=int, default=200,
                       help="seriation restarts for consensus clustering (default 200)")
        p.add_argument("--min-gain", type=float, default=None,
                       help="box-extension threshold (default: 5%% critical value)")
        p.add_argument("--affinity-min-gain", type=float, default=0.5,
                       help="box-extension threshold on the affinity matrix (default 0.5)")
        p.add_argument("--v-threshold", type=float, default=0.05,
                       help="negative-weight threshold excluding the leading eigenvalue "
                            "from attribution (default 0.05)")
        p.add_argument("--sa-t0", type=float, default=None,
                       help="initial annealing temperature (default: auto)")
        p.add_argument("--sa-alpha", type=float, default=0.995,
                       help="geometric cooling factor (default 0.995)")
        p.add_argument("--sa-moves", type=int, default=None,
                       help="moves per temperature (default 200*N)")
        p.add_argument("--sa-patience", type=int, default=5,
                       help="stop after this many silent temperatures (default 5)")
        p.add_argument("--sa-max-temps", type=int, default=5000,
                       help="hard cap on temperature steps (default 5000)")
        p.add_argument("--horizon", type=int, default=6,
                       help="forward horizon (windows) for label matching (default 6)")
        p.add_argument("--interval-split", default="1996Q2",
                       help="first quarter of the late tracking interval")
        p.add_argument("--reference-start", default="1997Q1")
        p.add_argument("--reference-end", default="1998Q3")
        p.add_argument("--dump-matrices", action="store_true",
                       help="also write per-window correlation/partial/affinity CSVs")


def _resolve_out(args) -> Path:
    out = Path(args.out)
    if getattr(args, "exact_out", False):
        return out
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return out / f"run-{stamp}"


def _config_from_args(args) -> RunConfig:
    fields = {
        "seed": args.seed,
        "out_dir": _resolve_out(args),
        "input": args.input,
        "schema": getattr(args, "schema", None),
        "national": getattr(args, "national", None),
        "size_s": args.size_s,
        "alpha": args.alpha,
    }
    for attr, key in [
        ("rounds", "null_rounds"), ("null_method", "null_method"),
        ("regime_threshold", "regime_threshold"), ("restarts", "restarts"),
        ("min_gain", "min_gain"), ("affinity_min_gain", "affinity_min_gain"),
        ("v_threshold", "v_threshold"), ("sa_t0", "sa_t0"), ("sa_alpha", "sa_alpha"),
        ("sa_moves", "sa_moves_per_temp"), ("sa_patience", "sa_patience"),
        ("sa_max_temps", "sa_max_temperatures"), ("horizon", "horizon"),
        ("interval_split", "interval_split"), ("reference_start", "reference_start"),
        ("reference_end", "reference_end"), ("dump_matrices", "dump_matrices"),
    ]:
        if hasattr(args, attr) and getattr(args, attr) is not None:
            fields[key] = getattr(args, attr)
    return RunConfig(**fields)


def _cmd_ingest(args) -> int:
    schema = load_schema(args.schema) if args.schema else CsvSchema()
    panel = parse_price_csv(args.input, schema)
    returns = log_returns(panel)
    print(f"parsed {panel.n_entities} entities x {panel.n_quarters} quarters "
          f"({panel.quarters[0]}..{panel.quarters[-1]})")
    print(f"log returns: {returns.n_quarters} quarters "
          f"({returns.quarters[0]}..{returns.quarters[-1]})")
    if args.returns_out:
        write_return_csv(returns, args.returns_out)
        print(f"wrote {args.returns_out}")
    return 0


def _run_stages(args, stages) -> int:
    config = _config_from_args(args)
    manifest = run_pipeline(config, stages=stages)
    out = Path(config.out_dir)
    print(f"wrote {len(manifest['artifacts'])} artifacts to {out} "
          f"({manifest['n_windows']} windows, {manifest['wall_time_s']}s)")
    print(f"manifest: {out / 'manifest.json'}")
    return 0


def _cmd_synth(args) -> int:
    n = args.entities
    groups = []
    if args.clusters > 0:
        size = n // args.clusters
        if size < 2:
            raise ValueError("cluster size below 2; reduce --clusters")
        groups = [list(range(c * size, (c + 1) * size)) for c in range(args.clusters)]
    spec = FactorModelSpec(
        n_entities=n,
        n_quarters=args.quarters,
        market_beta=args.beta,
        memberships=groups,
        cluster_loading=args.gamma,
        noise_scale=args.sigma,
        seed=args.seed,
        innovations=args.innovations,
        t_dof=args.t_dof,
    )
    panel, planted, market = generate_factor_panel(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_price_csv(panel, out / "panel.csv")
    (out / "planted_partition.json").write_text(
        json.dumps({"clusters": planted.clusters, "isolated": planted.isolated},
                   indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    lines = ["quarter,value"] + [f"{q},{float(v)!r}" for q, v in
                                 zip(panel.quarters[1:], market)]
    (out / "market.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote panel.csv, planted_partition.json, market.csv to {out}")
    return 0


def _cmd_report(args) -> int:
    written = write_report(args.run_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelcorr",
        description="Rolling correlation-matrix analytics for price-index panels",
    )
    parser.add_argument("--version", action="version", version=f"panelcorr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate a price CSV, compute log returns")
    _add_input_args(p)
    p.add_argument("--returns-out", help="write the log-return panel to this CSV")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("analyze", help="per-window eigenvalue analysis with permutation null")
    _add_input_args(p)
    _add_out_args(p)
    _add_run_args(p, clustering=False, market=False)
    p.set_defaults(func=lambda a: _run_stages(a, ("spectra",)))

    p = sub.add_parser("cluster", help="seriation, consensus clustering and cluster tracking")
    _add_input_args(p)
    _add_out_args(p)
    _add_run_args(p, spectra=False, market=False)
    p.set_defaults(func=lambda a: _run_stages(a, ("clusters", "tracking")))

    p = sub.add_parser("regimes", help="market-effect coefficients and regime shifts")
    _add_input_args(p)
    _add_out_args(p)
    _add_run_args(p, clustering=False, spectra=False)
    p.set_defaults(func=lambda a: _run_stages(a, ("market",)))

    p = sub.add_parser("synth", help="generate a synthetic planted-factor price panel")
    p.add_argument("--entities", type=int, default=30)
    p.add_argument("--quarters", type=int, default=120,
                   help="number of return quarters (panel has one more)")
    p.add_argument("--clusters", type=int, default=3,
                   help="number of equal planted clusters (0 for none)")
    p.add_argument("--beta", type=float, default=1.0, help="market loading")
    p.add_argument("--gamma", type=float, default=0.5, help="cluster-factor loading")
    p.add_argument("--sigma", type=float, default=0.5, help="idiosyncratic noise scale")
    p.add_argument("--innovations", choices=["gaussian", "student_t"], default="gaussian")
    p.add_argument("--t-dof", type=float, default=3.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="synth", help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="emit plot-ready CSVs from a completed run")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("run", help="run every stage and write all artifacts")
    _add_input_args(p)
    _add_out_args(p)
    _add_run_args(p)
    p.add_argument("--report", action="store_true", help="also write the report CSVs")
    p.set_defaults(func=_cmd_run_all)

    return parser


def _cmd_run_all(args) -> int:
    config = _config_from_args(args)
    manifest = run_pipeline(config, stages=ALL_STAGES)
    out = Path(config.out_dir)
    print(f"wrote {len(manifest['artifacts'])} artifacts to {out} "
          f"({manifest['n_windows']} windows, {manifest['wall_time_s']}s)")
    if args.report:
        for path in write_report(out):
            print(f"wrote {path}")
    print(f"manifest: {out / 'manifest.json'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single funnel for exit diagnostics
        stage = exc.__class__.__name__
        print(f"error [{args.command}/{stage}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
