"""Command-line batch driver."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .config import parse_config, serialize_plan
from .errors import NumericalError, ValidationError
from .io import ArtifactIOError
from .runner import run_plan, run_sweep

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

COMMAND_STAGES = {
    "bands": ["bands"],
    "leads": ["leads"],
    "transmission": ["transmission"],
    "scba": ["scba", "maps"],
}


def _threads(value) -> int:
    raw = value if value is not None else os.environ.get("NEGF_THREADS")
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"thread count must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"thread count must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="simulation plan (INI)")
    common.add_argument("--output-dir", help="override output.directory")
    common.add_argument("--threads", help="worker threads (fallback: NEGF_THREADS, then 1)")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="fixed reduction order, zeroed timings, no timestamps")
    common.add_argument("--verbose", "-v", action="count", default=0)

    p = argparse.ArgumentParser(prog="apdnegf", description="Atomistic NEGF transport with impact-ionization SCBA.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bands", parents=[common], help="band structure with orbital weights")
    sub.add_parser("leads", parents=[common], help="potential profile and lead density of states")
    sub.add_parser("transmission", parents=[common], help="coherent transmission and Landauer current")
    sub.add_parser("scba", parents=[common], help="SCBA with the configured kernels, then LDOS maps")
    sw = sub.add_parser("sweep", parents=[common], help="I-V table over device.bias")
    sw.add_argument("--scattering", action="store_true", help="solve each bias with the SCBA")
    val = sub.add_parser("validate", parents=[common], help="check the plan and print it with defaults filled")
    val.add_argument("--run", action="store_true", help="also execute every configured stage")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads(args.threads)
        plan = parse_config(args.config)
        kw = dict(output_dir=args.output_dir, threads=threads, deterministic=args.deterministic)
        if args.command == "validate":
            sys.stdout.write(serialize_plan(plan))
            if args.run:
                run_plan(plan, **kw)
        elif args.command == "sweep":
            run_sweep(plan, scattering=args.scattering, **kw)
        else:
            run_plan(plan, stages=COMMAND_STAGES[args.command], **kw)
    except ValidationError as exc:
        return _fail(exc, EXIT_VALIDATION)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except (ArtifactIOError, OSError) as exc:
        return _fail(exc, EXIT_IO)
    return EXIT_OK


def _fail(exc: Exception, code: int) -> int:
    stage = getattr(exc, "stage", None)
    prefix = f"error in stage {stage}" if stage else "error"
    print(f"{prefix}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
