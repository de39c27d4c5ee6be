"""Command-line front end.

    roughwalk <command> [--config FILE] [--seed S] [--workers W] [--out DIR] [overrides]

Commands: simulate, lift, pvar, predict, estimate, sweep, rde, plotdata.
Every run writes its outputs and a ``manifest.json`` into the output
directory.  Exit codes: 0 success, 1 invalid configuration, 2 numerical
failure; on failure an ``error.json`` names the problem.
"""

import argparse
import csv
import json
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, homog, mc, rde, rng
from .models.conductance import PathRecorder, run_conductance_batch
from .models.ou import OuParams, simulate_ou, additive_functional
from .models.periodic import simulate_periodic_diffusion
from .tensor_path import (
    JumpPath,
    SampledPath,
    LINEAR,
    SAMPLES,
    diffusive_rescale,
    interpolate,
    ito_lift_jump,
    ito_lift_sampled,
    read_path_csv,
    strato_lift_linear,
    write_path_csv,
)
from .variation import pvar_area, pvar_bruteforce, pvar_dyadic, pvar_grid_dp

COMMANDS = ("simulate", "lift", "pvar", "predict", "estimate", "sweep", "rde")
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    command: str
    model: dict = None
    seed: int = 0
    replicas: int = None
    workers: int = None
    p: float = None
    q: float = None
    K: int = 32
    method: str = "dp"
    level: int = 5
    lift: str = "ito"
    scales: list = None
    statistic: str = "gamma_hat"
    target: list = None
    probe: str = "estimate"
    input: str = None
    covariance: list = None
    rde: dict = None
    out: str = "out"

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown configuration field")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("command", str(exc)) from exc

    def to_dict(self):
        return asdict(self)

    def model_config(self):
        if self.model is None:
            raise ConfigError("model", "a model configuration is required")
        try:
            return mc.ModelConfig.from_dict(self.model)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError("model", str(exc)) from exc

    def validate(self):
        """Check every knob the chosen command uses; raises :class:`ConfigError`."""
        if self.command not in COMMANDS:
            raise ConfigError("command", f"must be one of {COMMANDS}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError("workers", "must be a positive integer")
        c = self.command
        if c in ("simulate", "estimate", "sweep", "rde"):
            self.model_config()
        if c in ("estimate", "sweep", "rde"):
            if not isinstance(self.replicas, int) or self.replicas < 2:
                raise ConfigError("replicas", "must be an integer >= 2")
        if c in ("lift", "pvar"):
            if not self.input:
                raise ConfigError("input", "a path CSV is required")
            if not Path(self.input).exists():
                raise ConfigError("input", f"file {self.input} does not exist")
        if c == "lift" and self.lift not in ("ito", "strato"):
            raise ConfigError("lift", "must be 'ito' or 'strato'")
        if c == "pvar":
            if self.method not in ("dp", "brute", "dyadic", "area"):
                raise ConfigError("method", "must be one of dp, brute, dyadic, area")
            if self.p is None or not self.p >= 1:
                raise ConfigError("p", "must be >= 1")
            if self.level is None or self.level < 0:
                raise ConfigError("level", "must be >= 0")
        if c == "predict":
            kind = (self.model or {}).get("model")
            if kind not in mc.MODELS:
                raise ConfigError("model", f"model must be one of {mc.MODELS}")
            if kind == "periodic" and (not isinstance(self.K, int) or self.K < 1):
                raise ConfigError("K", "must be a positive integer")
            if kind == "conductance":
                law = self.model_config().law()
                if self.covariance is None and law.kind != "constant":
                    raise ConfigError("covariance", "an empirical covariance is required for random laws")
        if c == "sweep":
            if not self.scales or len(self.scales) < 3:
                raise ConfigError("scales", "at least 3 values of n are required")
            if any(b <= a for a, b in zip(self.scales[:-1], self.scales[1:])):
                raise ConfigError("scales", "must be strictly increasing")
            if self.probe not in ("estimate", "tightness"):
                raise ConfigError("probe", "must be 'estimate' or 'tightness'")
            if self.probe == "tightness" and (self.p is None or self.p < 2):
                raise ConfigError("p", "must be >= 2 for the tightness probe")
        if c == "rde":
            r = self.rde or {}
            if "field" not in r:
                raise ConfigError("rde.field", "a vector field is required")
            try:
                rde.field_from_dict(r["field"])
            except (KeyError, ValueError) as exc:
                raise ConfigError("rde.field", str(exc)) from exc
            if not r.get("h", 0) > 0:
                raise ConfigError("rde.h", "must be positive")
            if self.model_config().model != mc.CONDUCTANCE:
                raise ConfigError("model", "the rde command drives with the conductance walk")
            if self.replicas < rde.MIN_SAMPLES:
                raise ConfigError("replicas", f"compare_laws needs at least {rde.MIN_SAMPLES} samples")
        return self


# ---------------------------------------------------------------------------
# helpers


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions():
    import numba
    import scipy

    return {
        "roughwalk": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _simulate_path(mcfg, seed):
    """One rescaled path on ``[0, horizon]`` (replica 0 of the harness)."""
    n = mcfg.scale_n
    if mcfg.model == mc.OU:
        g = rng.replica_generator(rng.replica_keys(seed, [0])[0])
        micro = simulate_ou(OuParams(), mcfg.horizon, n, mcfg.step, g)
        return additive_functional(micro, n)
    if mcfg.model == mc.CONDUCTANCE:
        keys = rng.replica_keys(seed, [0])
        env_keys, walk_keys = mc.conductance_keys(mcfg, keys, seed)
        rec = PathRecorder()
        run_conductance_batch(mcfg.law(), mcfg.dim, n * mcfg.horizon, env_keys, walk_keys, [rec])
        return diffusive_rescale(rec.paths(mcfg.dim, n * mcfg.horizon)[0], n)
    micro = simulate_periodic_diffusion(mcfg.coefficients(), n * mcfg.horizon, mcfg.step, seed)
    return diffusive_rescale(micro, n)


def _lift(path, kind):
    if isinstance(path, JumpPath):
        return (path, ito_lift_jump(path)) if kind == "ito" else (interpolate(path), strato_lift_linear(interpolate(path)))
    if kind == "ito":
        base = SampledPath(path.times, path.values, SAMPLES)
        return base, ito_lift_sampled(base)
    base = SampledPath(path.times, path.values, LINEAR)
    return base, strato_lift_linear(base)


# ---------------------------------------------------------------------------
# commands; each returns a dict of output name -> file path


def cmd_simulate(cfg, out):
    path = _simulate_path(cfg.model_config(), cfg.seed)
    target = out / "path.csv"
    write_path_csv(target, path)
    return {"path": str(target)}


def cmd_lift(cfg, out):
    path, _ = read_path_csv(cfg.input)
    base, lift = _lift(path, cfg.lift)
    target = out / "lift.csv"
    write_path_csv(target, base, lift)
    return {"lift": str(target)}


def cmd_pvar(cfg, out):
    path, _ = read_path_csv(cfg.input)
    if cfg.method == "dp":
        res = pvar_grid_dp(path, cfg.p)
    elif cfg.method == "brute":
        res = pvar_bruteforce(path, cfg.p)
    elif cfg.method == "dyadic":
        res = pvar_dyadic(path, cfg.p, cfg.level)
    else:
        _, lift = _lift(path, cfg.lift)
        res = pvar_area(lift, cfg.p)
    target = out / "pvar.json"
    _write_json(target, res.to_json())
    return {"pvar": str(target)}


def cmd_predict(cfg, out):
    kind = cfg.model["model"]
    if kind == mc.OU:
        pred = homog.ou_predict()
    elif kind == mc.CONDUCTANCE:
        mcfg = cfg.model_config()
        law = mcfg.law()
        cov = cfg.covariance
        if cov is None:
            cov = homog.conductance_constant_covariance(law.a, mcfg.dim)
        pred = homog.conductance_predict(law, cov)
    else:
        coeffs = cfg.model_config().coefficients()
        sol = homog.torus_poisson_solve(coeffs, cfg.K)
        pred = homog.periodic_predict(coeffs, sol)
    target = out / "prediction.json"
    _write_json(target, pred.to_json())
    return {"prediction": str(target)}


def cmd_estimate(cfg, out):
    mcfg = cfg.model_config()
    _, reports = mc.estimate(mcfg, cfg.replicas, cfg.seed, cfg.workers)
    target = out / "estimates.json"
    _write_json(target, {k: r.to_json(timing=False) for k, r in reports.items()})
    long = out / "estimates.csv"
    mc.write_long_csv(long, reports.values())
    return {"estimates": str(target), "long_csv": str(long)}


def cmd_sweep(cfg, out):
    mcfg = cfg.model_config()
    if cfg.probe == "tightness":
        table = mc.pvar_tightness_probe(mcfg, cfg.p, cfg.scales, cfg.replicas, cfg.seed, cfg.level, cfg.workers)
        target = out / "tightness.json"
        _write_json(target, table.to_json())
        fan = out / "tightness.csv"
        with open(fan, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("n", "quantile", "value"))
            w.writerows(table.long_rows())
        return {"tightness": str(target), "quantiles_csv": str(fan)}
    sweep = mc.convergence_sweep(mcfg, cfg.scales, cfg.replicas, cfg.seed, cfg.statistic, cfg.target, cfg.workers)
    target = out / "sweep.json"
    _write_json(target, sweep.to_json(timing=False))
    rows = out / "sweep.csv"
    with open(rows, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("n", "statistic", "deviation", "max_stderr", "M", "seed"))
        for n, rep, dev in zip(sweep.scales, sweep.reports, sweep.deviations()):
            w.writerow((n, sweep.statistic, dev, float(np.max(rep.stderr)), rep.replicas, rep.seed))
    return {"sweep": str(target), "sweep_csv": str(rows)}


def cmd_rde(cfg, out):
    mcfg = cfg.model_config()
    r = cfg.rde
    fld = rde.field_from_dict(r["field"])
    y0 = r.get("y0", [1.0] * fld.out_dim)
    y, x = rde.conductance_driven_samples(mcfg, fld, y0, cfg.replicas, cfg.seed)
    cov = np.einsum("mi,mj->ij", x, x) / x.shape[0]
    pred = homog.conductance_predict(mcfg.law(), cov)
    limit_m = int(r.get("limit_replicas", cfg.replicas))
    limit_seed = int(r.get("limit_seed", cfg.seed + 1))
    yc = rde.limit_samples(fld, pred, y0, r["h"], limit_m, limit_seed, corrected=True)
    yu = rde.limit_samples(fld, pred, y0, r["h"], limit_m, limit_seed, corrected=False)
    corrected = rde.compare_laws(y, yc)
    uncorrected = rde.compare_laws(y, yu)
    report = {
        "prediction": pred.to_json(),
        "corrected": {**corrected.to_json(), "within_3_stderr": corrected.within(3.0)},
        "uncorrected": {**uncorrected.to_json(), "beyond_3_stderr": uncorrected.beyond(3.0)},
    }
    target = out / "rde_report.json"
    _write_json(target, report)
    outputs = {"report": str(target)}
    for name, s in (("driven", y), ("limit_corrected", yc), ("limit_uncorrected", yu)):
        p = out / f"samples_{name}.csv"
        np.savetxt(p, s, delimiter=",", header=",".join(f"y{i + 1}" for i in range(s.shape[1])), comments="")
        outputs[name] = str(p)
    return outputs


DISPATCH = {
    "simulate": cmd_simulate,
    "lift": cmd_lift,
    "pvar": cmd_pvar,
    "predict": cmd_predict,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "rde": cmd_rde,
}


def run(config):
    """Validate and execute one configuration; returns the exit code."""
    out = Path(config.out if isinstance(config, ExperimentConfig) else config.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
        cfg.validate()
    except ConfigError as exc:
        _write_json(out / "error.json", {"kind": "validation", "field": exc.field, "message": str(exc)})
        return EXIT_INVALID
    try:
        with np.errstate(invalid="raise"):
            outputs = DISPATCH[cfg.command](cfg, out)
    except (homog.SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        _write_json(out / "error.json", {"kind": "numerical", "message": str(exc),
                                         "residual": getattr(exc, "residual", None)})
        return EXIT_NUMERIC
    except ValueError as exc:
        # a precondition violated at run time (e.g. ellipticity, too many brute-force points)
        _write_json(out / "error.json", {"kind": "numerical", "message": str(exc)})
        return EXIT_NUMERIC
    manifest = {
        "config": cfg.to_dict(),
        "versions": _versions(),
        "seed": cfg.seed,
        "workers": cfg.workers if cfg.workers is not None else mc.default_workers(),
        "wall_time": time.perf_counter() - t0,
        "outputs": outputs,
    }
    _write_json(out / "manifest.json", manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot data


PLOT_HEADER = ("n", "statistic", "i", "j", "mean", "stderr")


def _report_rows(obj):
    if "reports" in obj and "scales" in obj:
        for n, rep in zip(obj["scales"], obj["reports"]):
            yield from _report_rows({**rep, "scale_n": n})
        return
    if "statistic" in obj and "mean" in obj:
        rep = mc.EstimatorReport.from_json(obj)
        for row in rep.long_rows():
            yield (rep.scale_n, row[0], row[1], row[2], row[3], row[4])
        return
    for value in obj.values():
        if isinstance(value, dict):
            yield from _report_rows(value)


def emit_plotdata(report_files, target):
    """Concatenate reports into one tidy CSV, stably sorted by (statistic, n)."""
    rows = []
    for f in report_files:
        with open(f) as fh:
            rows.extend(_report_rows(json.load(fh)))
    rows.sort(key=lambda r: (r[1], r[0]))
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PLOT_HEADER)
        w.writerows(rows)
    return len(rows)


# ---------------------------------------------------------------------------
# argument parsing


def _parser():
    ap = argparse.ArgumentParser(prog="roughwalk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out")
        sp.add_argument("--model", help="model name (ou, conductance, periodic)")
        sp.add_argument("--input", help="path CSV")
        sp.add_argument("--p", type=float)
        sp.add_argument("--method")
        sp.add_argument("--level", type=int)
        sp.add_argument("--lift")
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--n", type=float, help="scale parameter n")
        sp.add_argument("--K", type=int)
        sp.add_argument("--run", type=int, help="run index inside a multi-run criterion file")
    pd = sub.add_parser("plotdata")
    pd.add_argument("reports", nargs="*")
    pd.add_argument("--out", default="out")
    return ap


def unwrap_runs(base, run_index=None):
    """Select one run from a criterion file ``{"runs": [config, ...], ...}``; plain configs pass through."""
    if "runs" not in base:
        return base
    runs = base["runs"]
    if not runs:
        raise ConfigError("runs", "this file has no command-line run; it is exercised by the acceptance suite")
    if run_index is None:
        if len(runs) != 1:
            raise ConfigError("run", f"the file holds {len(runs)} runs; choose one with --run")
        run_index = 0
    if not 0 <= run_index < len(runs):
        raise ConfigError("run", f"run index must be in [0, {len(runs) - 1}]")
    return dict(runs[run_index])


def _resolve(args):
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = unwrap_runs(json.load(fh), args.run)
    base["command"] = args.command
    for key in ("seed", "out", "input", "p", "method", "level", "lift", "replicas", "K"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.workers is not None:
        base["workers"] = args.workers
    elif "workers" not in base and os.environ.get("ROUGHWALK_WORKERS"):
        base["workers"] = int(os.environ["ROUGHWALK_WORKERS"])
    if args.model is not None:
        model = dict(base.get("model") or {})
        model["model"] = args.model
        model.setdefault("scale_n", 1.0)
        base["model"] = model
    if args.n is not None:
        model = dict(base.get("model") or {})
        model["scale_n"] = args.n
        base["model"] = model
    return base


def _early_error(args, field_name, message):
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "error.json", {"kind": "validation", "field": field_name, "message": message})
    return EXIT_INVALID


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "plotdata":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        emit_plotdata(args.reports, out / "plotdata.csv")
        return EXIT_OK
    try:
        config = _resolve(args)
    except (OSError, json.JSONDecodeError) as exc:
        return _early_error(args, "config", str(exc))
    except ConfigError as exc:
        return _early_error(args, exc.field, str(exc))
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
