"""Command-line front end: ``qclocksync run|list|sweep``.

Exit status is 0 on success, 2 on a configuration error and 3 when a run
completed but some analysis windows were lost.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .scenarios import ConfigError, list_scenarios, run, sweep

EXIT_OK, EXIT_CONFIG, EXIT_DEGRADED = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qclocksync", description="Two-way entangled-photon clock synchronization simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-window diagnostics")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a named scenario or a config file")
    r.add_argument("target", help="scenario name or config file path")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--out", default=None, help="output directory (default $QCLOCKSYNC_OUT/<name>)")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--workers", type=int, default=1, help="threads used to simulate windows")
    r.add_argument("--histograms", action="store_true", help="also write per-window coincidence histograms")

    sub.add_parser("list", help="list registered scenarios")

    s = sub.add_parser("sweep", help="run a scenario once per parameter value")
    s.add_argument("target", help="scenario name or config file path")
    s.add_argument("--param", required=True, metavar="KEY")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out", default=None)
    s.add_argument("--workers", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "list":
            for name, desc in list_scenarios():
                print(f"{name:16s} {desc}")
            return EXIT_OK
        if args.cmd == "run":
            rep = run(args.target, args.overrides, args.out, args.seed, args.workers, args.histograms)
            print(rep.summary_path.read_text(), end="")
            print(f"outputs: {rep.out_dir}")
            return EXIT_DEGRADED if rep.degraded else EXIT_OK
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        reports, path = sweep(args.target, args.param, values, args.out, args.overrides, args.workers)
        print(path.read_text(), end="")
        return EXIT_DEGRADED if any(r.degraded for r in reports) else EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
