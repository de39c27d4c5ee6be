"""Paths, level-2 lifts and Chen's relation.

Two path types cover everything the simulators produce:

* :class:`JumpPath` -- a càdlàg step path stored as a start value plus jump
  times and jump increments.
* :class:`SampledPath` -- values on a strictly increasing time grid, read
  either as a piecewise-linear path or as bare grid samples.

A :class:`Level2Lift` stores only the one-parameter running area
``A[k] = XX_{0, t_k}``; two-parameter values are recovered through

    XX_{s,t} = XX_{0,t} - XX_{0,s} - X_{0,s} (x) X_{s,t}

which is lossless and keeps storage linear in the number of grid points.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np
from numba import njit

ITO = "ito"
STRATONOVICH = "stratonovich-linear"
LINEAR = "piecewise-linear"
SAMPLES = "grid-samples"


def sym(m):
    m = np.asarray(m)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def antisym(m):
    m = np.asarray(m)
    return 0.5 * (m - np.swapaxes(m, -1, -2))


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _as_2d(values):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2:
        raise ValueError(f"path values must be 1-d or 2-d, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class JumpPath:
    """Piecewise-constant càdlàg path: ``X_t = start + sum_{t_i <= t} dX_i``."""

    start: np.ndarray
    jump_times: np.ndarray
    jump_increments: np.ndarray
    horizon: float

    def __post_init__(self):
        start = np.atleast_1d(np.asarray(self.start, dtype=np.float64))
        times = np.asarray(self.jump_times, dtype=np.float64).reshape(-1)
        inc = np.asarray(self.jump_increments, dtype=np.float64)
        d = start.shape[0]
        inc = inc.reshape(times.shape[0], d)
        horizon = float(self.horizon)
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("jump times must be strictly increasing (ties are rejected)")
            if times[0] <= 0 or times[-1] > horizon:
                raise ValueError("jump times must lie in (0, horizon]")
        object.__setattr__(self, "start", _frozen(start))
        object.__setattr__(self, "jump_times", _frozen(times))
        object.__setattr__(self, "jump_increments", _frozen(inc))
        object.__setattr__(self, "horizon", horizon)

    @property
    def dim(self):
        return self.start.shape[0]

    @property
    def n_jumps(self):
        return self.jump_times.shape[0]

    def event_times(self):
        """``[0, t_1, ..., t_K]`` -- the grid on which lifts are stored."""
        return np.concatenate([[0.0], self.jump_times])

    def values(self):
        """Values after each event, ``[X_0, X_{t_1}, ..., X_{t_K}]``."""
        return self.start + np.concatenate(
            [np.zeros((1, self.dim)), np.cumsum(self.jump_increments, axis=0)]
        )

    def value_at(self, t):
        k = np.searchsorted(self.jump_times, t, side="right")
        return self.start + self.jump_increments[:k].sum(axis=0)

    def left_limit(self, t):
        k = np.searchsorted(self.jump_times, t, side="left")
        return self.start + self.jump_increments[:k].sum(axis=0)

    def vertex_values(self):
        # p-variation of a step path is attained on the post-jump values
        return self.values()

    def quadratic_variation(self):
        """Trace of ``sum (dX)^{(x)2}``."""
        return float(np.sum(self.jump_increments**2))


@dataclass(frozen=True)
class SampledPath:
    times: np.ndarray
    values: np.ndarray
    interpretation: str = LINEAR

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        values = _as_2d(self.values)
        if values.shape[0] != times.shape[0]:
            raise ValueError("times and values have different lengths")
        if times.size == 0:
            raise ValueError("a sampled path needs at least one point")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if self.interpretation not in (LINEAR, SAMPLES):
            raise ValueError(f"unknown interpretation {self.interpretation!r}")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def horizon(self):
        return float(self.times[-1])

    def event_times(self):
        return self.times

    def value_at(self, t):
        if self.interpretation == LINEAR:
            return np.array([np.interp(t, self.times, self.values[:, c]) for c in range(self.dim)])
        k = np.searchsorted(self.times, t, side="right") - 1
        return self.values[max(k, 0)]

    def vertex_values(self):
        return self.values


@dataclass(frozen=True)
class Level2Lift:
    base: object
    area_running: np.ndarray
    lift_kind: str

    def __post_init__(self):
        area = np.asarray(self.area_running, dtype=np.float64)
        n = len(self.base.event_times())
        d = self.base.dim
        if area.shape != (n, d, d):
            raise ValueError(f"running area must have shape {(n, d, d)}, got {area.shape}")
        object.__setattr__(self, "area_running", _frozen(area))

    @property
    def times(self):
        return self.base.event_times()

    @property
    def path_values(self):
        b = self.base
        return b.values() if isinstance(b, JumpPath) else b.values

    def index(self, t):
        times = self.times
        k = int(np.searchsorted(times, t))
        if k >= len(times) or times[k] != t:
            raise ValueError(f"time {t!r} is not on the lift's event grid")
        return k

    def increment(self, i, j):
        """Two-parameter area ``XX_{t_i, t_j}`` by grid index (Chen reconstruction)."""
        if i > j:
            raise ValueError("need i <= j")
        x = self.path_values
        a = self.area_running
        return a[j] - a[i] - np.outer(x[i] - x[0], x[j] - x[i])

    def total(self):
        return self.area_running[-1]


# ---------------------------------------------------------------------------
# compensated running sums


@njit(cache=True)
def _running_area(x, theta):
    """Running sum_i (x_i + theta*(x_{i+1}-x_i) - x_0) (x) (x_{i+1}-x_i), Kahan-compensated.

    theta=0 is the left-point (Itô) sum, theta=0.5 the trapezoid sum, which is
    the exact iterated integral of the piecewise-linear interpolant.
    """
    n, d = x.shape
    out = np.zeros((n, d, d))
    s = np.zeros((d, d))
    c = np.zeros((d, d))
    for k in range(n - 1):
        for a in range(d):
            left = x[k, a] + theta * (x[k + 1, a] - x[k, a]) - x[0, a]
            for b in range(d):
                term = left * (x[k + 1, b] - x[k, b])
                y = term - c[a, b]
                t = s[a, b] + y
                c[a, b] = (t - s[a, b]) - y
                s[a, b] = t
                out[k + 1, a, b] = t
    return out


@njit(cache=True)
def _running_outer(inc, scale):
    """Running scale * sum_i inc_i (x) inc_i, Kahan-compensated; row 0 is zero."""
    n, d = inc.shape
    out = np.zeros((n + 1, d, d))
    s = np.zeros((d, d))
    c = np.zeros((d, d))
    for k in range(n):
        for a in range(d):
            for b in range(d):
                term = scale * inc[k, a] * inc[k, b]
                y = term - c[a, b]
                t = s[a, b] + y
                c[a, b] = (t - s[a, b]) - y
                s[a, b] = t
                out[k + 1, a, b] = t
    return out


# ---------------------------------------------------------------------------
# lifts


def ito_lift_jump(path):
    """Left-point lift of a step path; constant between jumps."""
    return Level2Lift(path, _running_area(path.values(), 0.0), ITO)


def interpolate(path):
    """Piecewise-linear interpolation through the post-jump values of a step path."""
    times = path.event_times()
    values = path.values()
    if times[-1] < path.horizon:
        times = np.append(times, path.horizon)
        values = np.vstack([values, values[-1:]])
    return SampledPath(times, values, LINEAR)


def strato_lift_linear(path):
    if path.interpretation != LINEAR:
        raise ValueError("the trapezoid lift needs a piecewise-linear path")
    return Level2Lift(path, _running_area(path.values, 0.5), STRATONOVICH)


def ito_lift_sampled(path):
    if path.interpretation != SAMPLES:
        raise ValueError("the left-point sampled lift needs a grid-samples path")
    return Level2Lift(path, _running_area(path.values, 0.0), ITO)


def interpolation_gap(path):
    """Running ``1/2 sum_{t_i <= t} (dX_i)^{(x)2}`` at ``[0, t_1, ..., t_K]``.

    Equals strato_lift_linear(interpolate(path)) minus ito_lift_jump(path) at
    every jump time.
    """
    gap = _running_outer(np.ascontiguousarray(path.jump_increments), 0.5)
    return list(zip(path.event_times(), gap))


def chen_reconstruct(lift, s, t):
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    return lift.increment(lift.index(s), lift.index(t))


def chen_defect(lift, i, j, k):
    """``XX_{r,t} - XX_{r,s} - XX_{s,t} - X_{r,s} (x) X_{s,t}`` for grid indices r=i<=s=j<=t=k."""
    x = lift.path_values
    return (
        lift.increment(i, k)
        - lift.increment(i, j)
        - lift.increment(j, k)
        - np.outer(x[j] - x[i], x[k] - x[j])
    )


def windowed_left_sum(values, i, j, theta=0.0):
    """Direct ``sum_{i<=k<j} (x_k + theta dx_k - x_i) (x) dx_k`` -- the Chen oracle."""
    x = np.asarray(values, dtype=np.float64)
    seg = x[i : j + 1]
    return _running_area(np.ascontiguousarray(seg), theta)[-1]


def diffusive_rescale(path, n, target_horizon=None):
    """Rescale ``X^n_t = n^{-1/2} X_{nt}``; optionally restrict to ``[0, target_horizon]``."""
    n = float(n)
    if not n > 0:
        raise ValueError("scale n must be positive")
    horizon = path.horizon / n
    if target_horizon is not None:
        if path.horizon < n * target_horizon * (1 - 1e-12):
            raise ValueError(
                f"path horizon {path.horizon} is shorter than n*T = {n * target_horizon}"
            )
        horizon = float(target_horizon)
    s = n**-0.5
    if isinstance(path, JumpPath):
        keep = path.jump_times / n <= horizon
        return JumpPath(
            path.start * s, path.jump_times[keep] / n, path.jump_increments[keep] * s, horizon
        )
    keep = path.times / n <= horizon * (1 + 1e-12)
    return SampledPath(path.times[keep] / n, path.values[keep] * s, path.interpretation)


def restrict_lift(lift, indices):
    """The lift observed only at the given (sorted) grid indices, as a grid-samples lift.

    Area values come from Chen, so restricting and then reconstructing gives
    exactly the two-parameter increments of the original lift.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if idx[0] != 0:
        idx = np.concatenate([[0], idx])
    base = SampledPath(lift.times[idx], lift.path_values[idx], SAMPLES)
    return Level2Lift(base, lift.area_running[idx], lift.lift_kind)


# ---------------------------------------------------------------------------
# CSV


def _area_header(d):
    return [f"a{i + 1}{j + 1}" for i in range(d) for j in range(d)]


def write_path_csv(target, path, lift=None):
    """Write a path (and optionally its lift) as CSV.

    SampledPath: ``t,x1..xd``.  JumpPath: ``t,dx1..dxd`` where the first row
    (t=0) carries the start value as an increment from the origin.  Lift
    columns ``a11..add`` (row-major ``XX_{0,t}``) are appended when given.
    """
    own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
    fh = open(target, "w", newline="") if own else target
    try:
        w = csv.writer(fh)
        d = path.dim
        if isinstance(path, JumpPath):
            fh.write(f"# kind=jump horizon={path.horizon!r}\n")
            header = ["t"] + [f"dx{i + 1}" for i in range(d)]
            rows = np.column_stack(
                [path.event_times(), np.vstack([path.start[None, :], path.jump_increments])]
            )
        else:
            fh.write(f"# kind=sampled interpretation={path.interpretation}\n")
            header = ["t"] + [f"x{i + 1}" for i in range(d)]
            rows = np.column_stack([path.times, path.values])
        if lift is not None:
            header += _area_header(d)
            rows = np.column_stack([rows, lift.area_running.reshape(len(rows), d * d)])
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    finally:
        if own:
            fh.close()


def read_path_csv(source):
    """Inverse of :func:`write_path_csv`; returns ``(path, lift_or_None)``."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            text = fh.read()
    else:
        text = source.read()
    meta = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        elif line.strip():
            lines.append(line)
    rows = list(csv.reader(io.StringIO("\n".join(lines))))
    if not rows:
        raise ValueError("empty path CSV")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise ValueError("path CSV header must start with 't'")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(
        -1, len(header)
    )
    is_jump = len(header) > 1 and header[1].startswith("dx")
    d = sum(1 for h in header if h.startswith("dx" if is_jump else "x"))
    lift_cols = [h for h in header if h.startswith("a")]
    t = data[:, 0]
    cols = data[:, 1 : 1 + d]
    if is_jump:
        if t.size and t[0] == 0.0:
            start, t, cols, body = cols[0], t[1:], cols[1:], data
        else:
            start, body = np.zeros(d), np.vstack([np.zeros((1, data.shape[1])), data])
        horizon = float(meta.get("horizon", t[-1] if t.size else 1.0))
        path = JumpPath(start, t, cols, horizon)
    else:
        body = data
        path = SampledPath(t, cols, meta.get("interpretation", LINEAR))
    lift = None
    if lift_cols:
        if len(lift_cols) != d * d:
            raise ValueError("lift columns do not match the path dimension")
        area = body[:, 1 + d : 1 + d + d * d].reshape(-1, d, d)
        kind = ITO if isinstance(path, JumpPath) or path.interpretation == SAMPLES else STRATONOVICH
        lift = Level2Lift(path, area, kind)
    return path, lift
