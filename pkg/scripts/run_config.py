"""Run every command-line experiment listed in a criterion config file.

    python scripts/run_config.py configs/c07_periodic_cellular.json [--workers 4]
"""

import argparse
import json
import sys

from roughwalk import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    with open(args.config) as fh:
        spec = json.load(fh)
    if not spec.get("runs"):
        print(f"{args.config}: no command-line runs; use `pytest -m acceptance -k c{spec['criterion']:02d}`")
        return 0
    worst = 0
    for i, run in enumerate(spec["runs"]):
        run = dict(run)
        if args.workers is not None:
            run["workers"] = args.workers
        code = cli.run(run)
        print(f"run {i}: {run['command']} -> exit {code}, outputs in {run['out']}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
