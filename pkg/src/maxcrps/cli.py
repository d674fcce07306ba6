"""Batch command-line front end.

Subcommands: simulate, fit, experiment, depsummary.  Every command reads a
JSON config (--config); --seed, --jobs and --out override the config.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical error,
5 fit did not converge.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .errors import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_NOT_CONVERGED,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    ContractError,
    DataError,
    DomainError,
    NumericalError,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxcrps",
        description="Simulate max-stable data and fit it by CRPS minimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "draw observations from a configured model"),
        ("fit", "fit a model to a CSV of observations"),
        ("experiment", "run a replication study"),
        ("depsummary", "print dependence summaries of a configured model"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to a JSON config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--jobs", type=int, default=None, help="worker count for experiments")
        cmd.add_argument("--out", default=None, help="output directory")
    return parser


def _resolve_out(doc: dict, args) -> Path:
    out = args.out if args.out is not None else doc.get("out")
    if out is None:
        raise ConfigError("out: supply --out or an 'out' field in the config")
    return Path(out)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        doc = harness.load_config(args.config)
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.command == "simulate":
            path = harness.simulate_command(doc, _resolve_out(doc, args))
            print(f"wrote {path}")
            return EXIT_OK
        if args.command == "fit":
            path, converged = harness.fit_command(doc, _resolve_out(doc, args))
            print(f"wrote {path}")
            if not converged:
                print("fit did not converge", file=sys.stderr)
                return EXIT_NOT_CONVERGED
            return EXIT_OK
        if args.command == "experiment":
            out = _resolve_out(doc, args)
            report = harness.experiment_command(doc, out, jobs=args.jobs)
            print(f"wrote {out / 'summary.json'} ({report.summary['counts']['ok']} ok replicates)")
            return EXIT_OK
        result = harness.depsummary_command(doc)
        print(harness.render_depsummary(result), end="")
        if args.out is not None or doc.get("out") is not None:
            out = _resolve_out(doc, args)
            out.mkdir(parents=True, exist_ok=True)
            import json

            (out / "depsummary.json").write_text(json.dumps(result, indent=2) + "\n")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError,) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DomainError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
