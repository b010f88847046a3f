"""Command-line entry points.

Subcommands: ``run`` (train and evaluate a config), ``sweep`` (one run per
axis value), ``oracle`` (closed-form targets and audits), ``verify``
(train and compare against the analytic limits), ``fetch-digits``
(materialize the digits corpus as text).

Exit codes: 0 success, 1 configuration error, 2 verification failure.
``CHANI_WORKERS`` provides the worker count when ``--workers`` is absent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from chani.config import ConfigError, ExperimentConfig


def _workers(args: argparse.Namespace) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("CHANI_WORKERS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_value("run.seed", str(args.seed))
    if getattr(args, "runs", None) is not None:
        cfg = cfg.with_value("run.runs", str(args.runs))
    return cfg


def _add_common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--config", required=True, metavar="PATH", help="config file")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--runs", type=int, default=None, help="override run.runs")
    parser.add_argument("--out", required=out_required, metavar="DIR", help="output directory")
    parser.add_argument(
        "--workers", type=int, default=None, help="worker processes (default: CHANI_WORKERS or 1)"
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="chani", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train and evaluate one configuration")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run a config once per axis value")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, help="dotted config key to vary")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")

    p_oracle = sub.add_parser("oracle", help="emit closed-form targets and audits")
    p_oracle.add_argument("--config", required=True, metavar="PATH")
    p_oracle.add_argument("--out", default=None, metavar="DIR")

    p_verify = sub.add_parser("verify", help="train and compare against analytic limits")
    _add_common(p_verify)

    p_fetch = sub.add_parser("fetch-digits", help="write the digits corpus as text")
    p_fetch.add_argument("--out", required=True, metavar="PATH", help="output file")

    args = parser.parse_args(argv)

    try:
        if args.command == "fetch-digits":
            from chani.datasets import write_digits_file

            count = write_digits_file(args.out)
            print(f"wrote {count} records to {args.out}")
            return 0

        from chani import runner

        if args.command == "run":
            cfg = _load_config(args)
            summary = runner.run_experiment(cfg, args.out, workers=_workers(args))
            print(
                f"runs={summary['runs']} mean_final_accuracy={summary['mean_final_accuracy']:.4f} "
                f"q05={summary['quantile_05']:.4f} q95={summary['quantile_95']:.4f}"
            )
            return 0

        if args.command == "sweep":
            cfg = _load_config(args)
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            if not values:
                raise ConfigError("--values: no values given")
            rows = runner.run_sweep(cfg, args.axis, values, args.out, workers=_workers(args))
            for row in rows:
                print(
                    f"{row['axis']}={row['value']}: mean={row['mean_final_accuracy']:.4f} "
                    f"[{row['quantile_05']:.4f}, {row['quantile_95']:.4f}]"
                )
            return 0

        if args.command == "oracle":
            cfg = ExperimentConfig.load(args.config)
            report = runner.oracle_report(cfg)
            text = json.dumps(report, indent=2, sort_keys=True)
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "oracle.json").write_text(text + "\n", encoding="ascii")
            print(text)
            return 0

        if args.command == "verify":
            cfg = _load_config(args)
            checks = runner.run_verify(cfg, runs=cfg.runs, workers=_workers(args))
            failed = [c for c in checks if not c.passed]
            for c in checks:
                print(f"VERIFY {c.name}: {'PASS' if c.passed else 'FAIL'} ({c.detail})")
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "verify.json").write_text(
                    json.dumps(
                        [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
                        indent=2,
                    )
                    + "\n",
                    encoding="ascii",
                )
            return 2 if failed else 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
