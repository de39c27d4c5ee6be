"""Rough-path norm quantiles across n for the OU and conductance models."""

import argparse

from roughwalk import mc


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=2.5)
    ap.add_argument("--scales", type=float, nargs="+", default=[50, 100, 200, 400])
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--level", type=int, default=5)
    ap.add_argument("--seed", type=int, default=14)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    models = {
        "ou": mc.ModelConfig("ou", 1.0),
        "conductance": mc.ModelConfig("conductance", 1.0, params={"law": {"kind": "uniform", "a": 1.0, "b": 2.0}, "dim": 2}),
    }
    for name, cfg in models.items():
        t = mc.pvar_tightness_probe(cfg, args.p, args.scales, args.replicas, args.seed, args.level, args.workers)
        print(f"== {name}: slope of log q90 in log n = {t.slope:.4f}")
        for n in args.scales:
            print(f"  n={n:6.0f}  q50={t.quantiles[n][0]:.3f}  q90={t.quantiles[n][1]:.3f}  q99={t.quantiles[n][2]:.3f}")


if __name__ == "__main__":
    main()
