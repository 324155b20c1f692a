"""Command line entry point.

Exit codes: 0 success, 1 run failure, 2 verification failure, 64 bad usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_VERIFY_FAILED = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _n_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="locbasis",
                description="Search for phase-space localized oscillator bases over a sweep of N.")
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--n", type=_n_list, help="comma separated basis sizes, e.g. 2,4,8")
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=float, help="inverse temperature; enables the thermal stage")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--emit-profiles", action="store_true", default=None,
                   help="write |psi(x)|^2 tables for every state")
    p.add_argument("--max-proposals", type=int, help="proposal budget per N")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--verify", nargs="?", const=True, default=None, metavar="MANIFEST",
                   help="verify after the sweep; with a path, only verify that manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> harness.ExperimentConfig:
    doc = {}
    if args.config is not None:
        doc = json.loads(args.config.read_text())
    cfg = harness.ExperimentConfig.from_dict(doc)
    overrides = {}
    if args.n is not None:
        overrides["n_values"] = args.n
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.beta is not None:
        overrides["beta"] = args.beta
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.emit_profiles is not None:
        overrides["emit_profiles"] = args.emit_profiles
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.max_proposals is not None:
        overrides["optimizer"] = replace(cfg.optimizer, max_proposals=args.max_proposals)
    return harness.ExperimentConfig.from_dict({**cfg.__dict__, **overrides})


def _print_report(report: dict) -> None:
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['detail']}")
    print("verification", "passed" if report["passed"] else "FAILED")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    if isinstance(args.verify, str):
        try:
            report = harness.verify(Path(args.verify))
        except (OSError, ValueError, KeyError) as exc:
            print(f"cannot read manifest: {exc}", file=sys.stderr)
            return EXIT_USAGE
        _print_report(report)
        return EXIT_OK if report["passed"] else EXIT_VERIFY_FAILED

    try:
        cfg = load_config(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE

    manifest = harness.run_sweep(cfg)
    fits = manifest["fits"]
    if fits["fig1"] and fits["fig2"]:
        for path in harness.emit_figure_data(manifest, cfg.output_dir):
            print(f"wrote {path}")
    else:
        print("fewer than 3 usable N values; no fits or figure data")
    print(f"manifest: {cfg.output_dir / harness.MANIFEST_NAME}")
    status = EXIT_RUN_FAILED if manifest["failed"] else EXIT_OK

    if args.verify is True:
        report = harness.verify(cfg.output_dir / harness.MANIFEST_NAME)
        _print_report(report)
        if not report["passed"] and status == EXIT_OK:
            status = EXIT_VERIFY_FAILED
    return status


if __name__ == "__main__":
    sys.exit(main())
