"""Command line entry point: ``wavesurrogate run|audit <config>``."""
from __future__ import annotations

import argparse
import sys

from . import bench


def main(argv=None):
    parser = argparse.ArgumentParser(prog="wavesurrogate",
                                     description="Standard vs surrogate spline Helmholtz experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiments of a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=".", help="output directory for results.csv and summary.txt")
    p_run.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default ${bench.THREADS_ENV} or 1)")
    p_run.add_argument("--repeat", type=int, default=None, help="override the repeat count of every experiment")
    p_audit = sub.add_parser("audit", help="print row counts of the surrogate assembly")
    p_audit.add_argument("config")
    args = parser.parse_args(argv)
    try:
        configs = bench.load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "audit":
        print("\n".join(bench.audit(configs)))
        return 0
    _, summary, ok = bench.run(configs, args.out, args.threads, args.repeat)
    print("\n".join(summary))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
