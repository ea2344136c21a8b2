"""Command-line entry point.

    hypnorms --input DIR|FILE [--heights a,b,c] [--refine N] [--out DIR] [--sweeps] [--config FILE]

Exit status: 0 when every input succeeded, 1 on partial failures, 2 on a
configuration error.  The worker count comes from HYPNORMS_WORKERS.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .pipeline import ConfigError, RunConfig, model_sweeps, run_batch

log = logging.getLogger("hypnorms")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _refinements(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a refinement level list: {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hypnorms", description="Harmonic-form norms of cusped hyperbolic 3-manifolds.")
    p.add_argument("--input", action="append", default=None, metavar="DIR|FILE", help="manifold file or directory (repeatable)")
    p.add_argument("--heights", type=_floats, default=None, help="truncation heights T, ascending")
    p.add_argument("--refine", type=_refinements, default=None, metavar="N[,N...]", help="refinement level(s)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--sweeps", action="store_true", help="also write the model sweep tables")
    p.add_argument("--config", default=None, help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--no-l1", action="store_true", help="skip the L1 minimisation")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        if args.input is not None:
            cfg.inputs = args.input
        if args.heights is not None:
            cfg.heights = args.heights
        if args.refine is not None:
            cfg.refinements = args.refine
        if args.out is not None:
            cfg.out = args.out
        if args.no_l1:
            cfg.l1_min = False
        cfg.validate()
        if args.sweeps:
            model_sweeps(cfg.out)
        return run_batch(cfg)
    except (ConfigError, TypeError) as exc:
        log.error("configuration error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
