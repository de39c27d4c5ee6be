"""Driven equation against the corrected and uncorrected limits (conductance driver)."""

import argparse
import json

import numpy as np

from roughwalk import homog, mc, rde


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=float, default=400.0)
    ap.add_argument("--replicas", type=int, default=4000)
    ap.add_argument("--limit-replicas", type=int, default=20000)
    ap.add_argument("--h", type=float, default=2e-3)
    ap.add_argument("--seed", type=int, default=16)
    args = ap.parse_args()
    cfg = mc.ModelConfig("conductance", args.n, params={"law": {"kind": "two_point", "a": 1.0, "b": 4.0}, "dim": 2})
    field = rde.LinearField.scalar([0.5, 0.5])
    y, x = rde.conductance_driven_samples(cfg, field, [1.0], args.replicas, args.seed)
    pred = homog.conductance_predict(cfg.law(), np.einsum("mi,mj->ij", x, x) / len(x))
    out = {"ito_correction": pred.ito_correction.tolist(), "driven_mean": float(y.mean())}
    for corrected in (True, False):
        lim = rde.limit_samples(field, pred, [1.0], args.h, args.limit_replicas, args.seed + 1, corrected=corrected)
        out["corrected" if corrected else "uncorrected"] = rde.compare_laws(y, lim).to_json()
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
