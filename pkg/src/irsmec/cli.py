"""Command-line entry point: ``irsmec run`` and ``irsmec sweep``.

Exit codes: 0 success, 1 configuration error, 2 solver failure. The log
level comes from the IRSMEC_LOG environment variable (default WARNING).
"""

import argparse
import logging
import os
import sys

from .experiment import ALGORITHMS, SWEEP_VARIABLES, ConfigError, ExperimentConfig, OutputError, \
    emit_outputs, run_meta, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2
LOG_ENV = "IRSMEC_LOG"

log = logging.getLogger("irsmec")


def _parser():
    ap = argparse.ArgumentParser(prog="irsmec", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one algorithm over the configured seeds")
    run.add_argument("--config", required=True)
    run.add_argument("--algo", choices=sorted(ALGORITHMS))
    run.add_argument("--seed", type=int, help="run this seed only")
    run.add_argument("--out", help="output directory (overrides output_dir)")
    sw = sub.add_parser("sweep", help="sweep IRS elements or user count")
    sw.add_argument("--config", required=True)
    sw.add_argument("--var", required=True, choices=SWEEP_VARIABLES)
    sw.add_argument("--values", required=True, help="comma-separated positive integers")
    sw.add_argument("--algo", choices=sorted(ALGORITHMS))
    sw.add_argument("--out")
    return ap


def _parse_values(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated integers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError("--values must be positive integers")
    return vals


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    try:
        cfg = ExperimentConfig.load(args.config)
        changes = {}
        if args.algo:
            changes["algo"] = args.algo
        if args.out:
            changes["output_dir"] = args.out
        if args.command == "run":
            if args.seed is not None:
                changes["seeds"] = [args.seed]
        else:
            changes["sweep"] = {"variable": args.var, "values": _parse_values(args.values)}
        cfg = cfg.with_(**changes)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records, summaries = run_sweep(cfg)
        emit_outputs(records, summaries, cfg.output_dir, run_meta(cfg, records))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    failed = [r for r in records if not r.ok]
    for r in failed:
        print(f"run {r.run_id} ({r.algo}, value={r.sweep_value}, seed={r.seed}) failed: {r.error}",
              file=sys.stderr)
    return EXIT_SOLVER if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
