"""Command-line entry points.

Subcommands:
  trial   one seeded end-to-end trial, records written as CSV/JSONL
  sweep   Monte-Carlo sweep over the configured axis with aggregation
  oracle  run the quadrature/brute-force verification suites
  report  render figures from a sweep table

Exit codes: 0 on success, 1 on configuration errors, 2 on numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import NumericalCollapseError, UrasimError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="urasim",
        description="Slotted unsourced random access simulator (angular-domain MIMO)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_trial = sub.add_parser("trial", help="run one end-to-end trial")
    p_trial.add_argument("--config", required=True, help="YAML config path")
    p_trial.add_argument("--seed", type=int, default=None, help="trial seed override")
    p_trial.add_argument("--snr-db", type=float, default=None, help="SNR override (dB)")
    p_trial.add_argument("--out", default=".", help="output directory")
    p_trial.add_argument("--trace", action="store_true", help="write per-iteration traces")

    p_sweep = sub.add_parser("sweep", help="run the configured Monte-Carlo sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=".", help="output directory")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--no-resume", action="store_true", help="ignore existing records")

    p_oracle = sub.add_parser("oracle", help="run oracle verification suites")
    p_oracle.add_argument(
        "--suite",
        nargs="*",
        default=None,
        help="subset of: denoiser varpi em mrf hungarian channel pupe",
    )

    p_report = sub.add_parser("report", help="render figures from a sweep CSV")
    p_report.add_argument("--input", required=True, help="sweep CSV path")
    p_report.add_argument("--out", default=None, help="figure directory (default: beside CSV)")
    return parser


def _cmd_trial(args) -> int:
    from . import metrics
    from .config import load_config
    from .pipeline import run_trial

    config = load_config(args.config)
    if args.trace:
        config.collect_trace = True
    snr = args.snr_db if args.snr_db is not None else float(config.snr_db[0])
    seed = args.seed
    if seed is None:
        from .pipeline import trial_seeds

        seed = int(trial_seeds(config, 1)[0, 0])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    record, detail = run_trial(config, snr, seed, detail=True)
    metrics.records_to_csv(out_dir / "trial_record.csv", [record])
    metrics.records_to_jsonl(out_dir / "trial_record.jsonl", [record])
    if args.trace:
        with open(out_dir / "trial_trace.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "iteration", "nmse_db", "sigma2", "lam", "residual"])
            for slot, rows in enumerate(detail.traces):
                for row in rows:
                    writer.writerow(
                        [
                            slot,
                            row["iteration"],
                            repr(row.get("nmse_db", float("nan"))),
                            repr(row["sigma2"]),
                            repr(row["lam"]),
                            repr(row["residual"]),
                        ]
                    )
    print(
        f"trial seed={seed} snr={snr}dB: p_md={record.p_md:.4f} p_fa={record.p_fa:.4f} "
        f"p_e={record.p_e:.4f} nmse={record.nmse_db_mean:.2f}dB "
        f"({record.runtime_ms:.0f} ms)"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from dataclasses import asdict, fields as dc_fields

    from . import metrics
    from .config import load_config
    from .pipeline import aggregate_records, run_sweep, write_sweep_csv

    config = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "sweep_records.jsonl"
    table_path = out_dir / "sweep.csv"
    sidecar_path = out_dir / "sweep_config.json"

    completed = set()
    if records_path.exists() and not args.no_resume:
        with open(records_path) as fh:
            for line in fh:
                row = json.loads(line)
                if "axis_value" in row:
                    completed.add((row["axis_value"], row["record"]["seed"]))
    mode = "a" if completed else "w"
    with open(records_path, mode) as fh:

        def persist(value, record):
            fh.write(json.dumps({"axis_value": value, "record": asdict(record)}) + "\n")
            fh.flush()

        cells, _ = run_sweep(config, workers=args.workers, completed=completed, on_record=persist)
    if completed:
        # fold resumed records back into the aggregate
        by_point: dict[float, list] = {}
        with open(records_path) as fh:
            names = {f.name for f in dc_fields(metrics.TrialRecord)}
            for line in fh:
                row = json.loads(line)
                data = {k: v for k, v in row["record"].items() if k in names}
                by_point.setdefault(row["axis_value"], []).append(metrics.TrialRecord(**data))
        for cell in cells:
            records = by_point.get(cell.axis_value, [])
            cell.trials = len(records)
            cell.means, cell.standard_errors = aggregate_records(records)
    write_sweep_csv(table_path, config, cells)
    with open(sidecar_path, "w") as fh:
        json.dump({"config": config.snapshot(), "axis": config.sweep_axis}, fh, indent=2)
    for cell in cells:
        print(
            f"{config.sweep_axis}={cell.axis_value}: trials={cell.trials} "
            f"p_e={cell.means['p_e']:.4f}+/-{cell.standard_errors['p_e']:.4f} "
            f"failures={cell.failures}"
        )
    print(f"wrote {table_path}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    from .verification import ALL_CHECKS, run_checks

    names = args.suite or list(ALL_CHECKS)
    unknown = [n for n in names if n not in ALL_CHECKS]
    if unknown:
        print(f"unknown suites: {unknown}; available: {list(ALL_CHECKS)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_checks(names)
    for result in results:
        print(result.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def _cmd_report(args) -> int:
    from .report import render_report

    written = render_report(args.input, args.out)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "trial": _cmd_trial,
        "sweep": _cmd_sweep,
        "oracle": _cmd_oracle,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except NumericalCollapseError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UrasimError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
