"""Lepingle ratio E[||M||_p^2] / E[[M]_T] for walk martingales over a range of p."""

import argparse

from roughwalk import mc
from roughwalk.models.conductance import ConductanceLaw


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs="+", default=[2.25, 2.5, 3.0, 4.0])
    ap.add_argument("--replicas", type=int, default=500)
    ap.add_argument("--seed", type=int, default=12)
    args = ap.parse_args()
    walks = mc.symmetric_walk_paths(args.replicas, args.seed, horizon=100.0)
    marts = mc.conductance_martingales(ConductanceLaw.uniform(1.0, 2.0), 2, 30.0, args.replicas, args.seed + 1)
    print(f"{'p':>5} {'symmetric walk':>15} {'conductance':>12}")
    for p in args.p:
        a = mc.lepingle_diagnostic(walks, p).ratio
        b = mc.lepingle_diagnostic(marts, p).ratio
        print(f"{p:5.2f} {a:15.3f} {b:12.3f}")


if __name__ == "__main__":
    main()
