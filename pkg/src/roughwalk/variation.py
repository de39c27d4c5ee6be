"""p-variation of paths and of two-parameter area processes.

Why a grid DP is exact here: for a piecewise-linear path, fixing every
partition point but one that moves along a single segment, the objective
``|X_t - X_a|^p + |X_b - X_t|^p`` is a convex function of ``t`` (a norm of an
affine map raised to a power ``p >= 1``), so its maximum sits at a segment
end.  Pushing points to vertices one at a time never decreases the sum, hence
the supremum over all partitions equals the maximum over vertex subsets.  For
càdlàg step paths the same holds on the post-jump values: the path only takes
those values, and left limits at a jump equal the previous value.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .tensor_path import JumpPath, SampledPath, LINEAR

DP = "dp-exact"
BRUTE = "brute-force"
DYADIC = "dyadic-lower"

MAX_BRUTE_POINTS = 20


@dataclass(frozen=True)
class PvarResult:
    value: float
    optimal_partition: tuple
    method: str

    def to_json(self):
        return {"value": self.value, "partition": list(self.optimal_partition), "method": self.method}


@dataclass(frozen=True)
class ControlEvaluation:
    superadditivity_defects: list
    max_defect: float


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _pair_cost(x, i, j, p):
    s = 0.0
    for c in range(x.shape[1]):
        u = x[j, c] - x[i, c]
        s += u * u
    return s ** (0.5 * p)


@njit(cache=True)
def _area_cost(x, a, i, j, q):
    d = x.shape[1]
    s = 0.0
    for r in range(d):
        xr = x[i, r] - x[0, r]
        for c in range(d):
            m = a[j, r, c] - a[i, r, c] - xr * (x[j, c] - x[i, c])
            s += m * m
    return s ** (0.5 * q)


@njit(cache=True)
def _dp_path(x, p, prune):
    n, d = x.shape
    V = np.zeros(n)
    prev = np.full(n, -1, dtype=np.int64)
    lo = np.empty((n, d))
    hi = np.empty((n, d))
    for c in range(d):
        lo[0, c] = x[0, c]
        hi[0, c] = x[0, c]
    for i in range(1, n):
        for c in range(d):
            lo[i, c] = min(lo[i - 1, c], x[i, c])
            hi[i, c] = max(hi[i - 1, c], x[i, c])
    for j in range(1, n):
        best = -1.0
        arg = -1
        for i in range(j - 1, -1, -1):
            if prune and arg >= 0:
                # V is nondecreasing and the prefix box bounds |x_j - x_k| for all k <= i
                b2 = 0.0
                for c in range(d):
                    m = max(abs(x[j, c] - lo[i, c]), abs(x[j, c] - hi[i, c]))
                    b2 += m * m
                if V[i] + (b2 ** (0.5 * p)) * (1.0 + 1e-9) < best:
                    break
            v = V[i] + _pair_cost(x, i, j, p)
            if v > best:
                best = v
                arg = i
        V[j] = best
        prev[j] = arg
    return V, prev


@njit(cache=True)
def _dp_area(x, a, q):
    n = x.shape[0]
    V = np.zeros(n)
    prev = np.full(n, -1, dtype=np.int64)
    for j in range(1, n):
        best = -1.0
        arg = -1
        for i in range(j - 1, -1, -1):
            v = V[i] + _area_cost(x, a, i, j, q)
            if v > best:
                best = v
                arg = i
        V[j] = best
        prev[j] = arg
    return V, prev


@njit(cache=True)
def _skeleton_linear(x, times, delta):
    """Exact first-exit points of a piecewise-linear path from balls of radius delta."""
    n, d = x.shape
    out_t = np.empty(4 * n + 4)
    out_x = np.empty((4 * n + 4, d))
    out_t[0] = times[0]
    out_x[0] = x[0]
    m = 1
    center = x[0].copy()
    k = 0
    s0 = 0.0  # position within segment k already consumed
    while k < n - 1:
        # solve |x_k + s (x_{k+1}-x_k) - center| = delta for s in (s0, 1]
        A = 0.0
        B = 0.0
        C = 0.0
        for c in range(d):
            dv = x[k + 1, c] - x[k, c]
            w = x[k, c] - center[c]
            A += dv * dv
            B += 2.0 * w * dv
            C += w * w
        C -= delta * delta
        hit = -1.0
        if A > 0.0:
            disc = B * B - 4.0 * A * C
            if disc >= 0.0:
                r = (-B + math.sqrt(disc)) / (2.0 * A)
                if r > s0 and r <= 1.0:
                    hit = r
        if hit < 0.0:
            k += 1
            s0 = 0.0
            continue
        if m >= out_t.shape[0]:
            nt = np.empty(2 * out_t.shape[0])
            nx = np.empty((2 * out_t.shape[0], d))
            nt[:m] = out_t[:m]
            nx[:m] = out_x[:m]
            out_t = nt
            out_x = nx
        for c in range(d):
            center[c] = x[k, c] + hit * (x[k + 1, c] - x[k, c])
            out_x[m, c] = center[c]
        out_t[m] = times[k] + hit * (times[k + 1] - times[k])
        m += 1
        if hit >= 1.0:
            k += 1
            s0 = 0.0
        else:
            s0 = hit
    return out_t[:m], out_x[:m]


@njit(cache=True)
def _skeleton_grid(x, delta):
    n, d = x.shape
    keep = np.zeros(n, dtype=np.bool_)
    keep[0] = True
    ci = 0
    for i in range(1, n):
        s = 0.0
        for c in range(d):
            u = x[i, c] - x[ci, c]
            s += u * u
        if s >= delta * delta:
            keep[i] = True
            ci = i
    return np.nonzero(keep)[0]


def _chain(prev, j):
    out = [j]
    while prev[j] >= 0:
        j = int(prev[j])
        out.append(j)
    return tuple(reversed(out))


def _values(obj):
    if hasattr(obj, "vertex_values"):
        obj = obj.vertex_values()
    x = np.asarray(obj, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need at least one point")
    return np.ascontiguousarray(x)


def _check_p(p, name="p"):
    if not p >= 1:
        raise ValueError(f"{name} must be >= 1 (got {p}); vertex sufficiency needs convexity")


# ---------------------------------------------------------------------------
# public API


def pvar_grid_dp(values, p, prune=True):
    """Exact p-variation over grid points by dynamic programming.

    ``V(0) = 0``, ``V(j) = max_{i<j} V(i) + |x_j - x_i|^p``; the result is
    ``V(n)^{1/p}`` together with the maximising chain of indices.
    """
    _check_p(p)
    x = _values(values)
    if x.shape[0] == 1:
        return PvarResult(0.0, (0,), DP)
    V, prev = _dp_path(x, float(p), bool(prune))
    return PvarResult(float(V[-1]) ** (1.0 / p), _chain(prev, x.shape[0] - 1), DP)


def _enumerate(n, cost):
    best, best_part = -1.0, None
    inner = range(1, n - 1)
    for r in range(n - 1):
        for mid in itertools.combinations(inner, r):
            part = (0,) + mid + (n - 1,)
            s = 0.0
            for a, b in zip(part[:-1], part[1:]):
                s += cost(a, b)
            if s > best:
                best, best_part = s, part
    return best, best_part


def pvar_bruteforce(values, p):
    """Exhaustive search over all partitions containing both endpoints (oracle)."""
    _check_p(p)
    x = _values(values)
    n = x.shape[0]
    if n > MAX_BRUTE_POINTS:
        raise ValueError(f"brute force is limited to {MAX_BRUTE_POINTS} points, got {n}")
    if n == 1:
        return PvarResult(0.0, (0,), BRUTE)
    p = float(p)
    best, part = _enumerate(n, lambda a, b: _pair_cost(x, a, b, p))
    return PvarResult(best ** (1.0 / p), part, BRUTE)


def pvar_area(lift, q):
    """``q``-variation of the two-parameter area ``(s,t) -> |XX_{s,t}|`` (Frobenius norm).

    The functional is not additive, so the DP runs over all chains exactly as
    the definition requires.
    """
    _check_p(q, "q")
    x = np.ascontiguousarray(lift.path_values)
    a = np.ascontiguousarray(lift.area_running)
    if x.shape[0] == 1:
        return PvarResult(0.0, (0,), DP)
    V, prev = _dp_area(x, a, float(q))
    return PvarResult(float(V[-1]) ** (1.0 / q), _chain(prev, x.shape[0] - 1), DP)


def pvar_area_bruteforce(lift, q):
    _check_p(q, "q")
    x = np.ascontiguousarray(lift.path_values)
    a = np.ascontiguousarray(lift.area_running)
    n = x.shape[0]
    if n > MAX_BRUTE_POINTS:
        raise ValueError(f"brute force is limited to {MAX_BRUTE_POINTS} points, got {n}")
    if n == 1:
        return PvarResult(0.0, (0,), BRUTE)
    q = float(q)
    best, part = _enumerate(n, lambda i, j: _area_cost(x, a, i, j, q))
    return PvarResult(best ** (1.0 / q), part, BRUTE)


def partition_sum(values, partition, p):
    x = _values(values)
    return sum(_pair_cost(x, a, b, float(p)) for a, b in zip(partition[:-1], partition[1:]))


def dyadic_skeleton(path, level):
    """Stopping-time coarsening at threshold ``2**-level``.

    ``tau_0 = 0``, ``tau_{k+1} = inf{t >= tau_k : |Y_t - Y_{tau_k}| >= 2**-level}``.
    Returns a :class:`JumpPath` jumping at the ``tau_k`` (excluding 0) to the
    values ``Y_{tau_k}``; it stays within ``2**-level`` of the path (and of its
    left limits) at every time.  Piecewise-linear paths get exact crossing
    points; step paths and grid samples are scanned on their events.
    """
    delta = 2.0 ** (-level)
    if isinstance(path, SampledPath) and path.interpretation == LINEAR:
        t, x = _skeleton_linear(
            np.ascontiguousarray(path.values), np.ascontiguousarray(path.times), delta
        )
        horizon = path.horizon
        # zero-length moves at the very end are impossible; drop duplicate times defensively
        ok = np.concatenate([[True], np.diff(t) > 0])
        t, x = t[ok], x[ok]
    else:
        times = path.event_times()
        vals = np.ascontiguousarray(path.values() if isinstance(path, JumpPath) else path.values)
        idx = _skeleton_grid(vals, delta)
        t, x = times[idx], vals[idx]
        horizon = path.horizon
    return JumpPath(x[0], t[1:], np.diff(x, axis=0), horizon)


def skeleton_indices(path, level):
    """Grid indices of the skeleton points when scanning on grid/event values."""
    vals = np.ascontiguousarray(path.values() if isinstance(path, JumpPath) else path.values)
    return _skeleton_grid(vals, 2.0 ** (-level))


def pvar_dyadic(path, p, level):
    """Lower bound: exact p-variation of the dyadic skeleton."""
    sk = dyadic_skeleton(path, level)
    r = pvar_grid_dp(sk.values(), p)
    return PvarResult(r.value, r.optimal_partition, DYADIC)


def rough_norm(lift, p):
    """``|X_0| + ||X||_p + ||XX||_{p/2}^{1/2}``."""
    if not p >= 2:
        raise ValueError(f"rough path norm needs p >= 2, got {p}")
    x = lift.path_values
    return (
        float(np.linalg.norm(x[0]))
        + pvar_grid_dp(x, p).value
        + math.sqrt(pvar_area(lift, p / 2.0).value)
    )


def control_check(c, n_grid, n_samples=None, seed=0):
    """Superadditivity defects ``c(s,u) + c(u,t) - c(s,t)`` over grid triples.

    ``c`` is a callable on grid indices or an ``(n, n)`` array.  With
    ``n_samples`` set, a random sample of triples is checked instead of all.
    """
    if n_grid < 3:
        raise ValueError("need at least 3 grid points")
    f = (lambda i, j: float(c[i, j])) if isinstance(c, np.ndarray) else c
    if n_samples is None:
        triples = itertools.combinations(range(n_grid), 3)
    else:
        rng = np.random.default_rng(seed)
        triples = (tuple(sorted(rng.choice(n_grid, 3, replace=False))) for _ in range(n_samples))
    defects = []
    for s, u, t in triples:
        defects.append((s, u, t, f(s, u) + f(u, t) - f(s, t)))
    return ControlEvaluation(defects, max(d[3] for d in defects))


def pvar_control(values, p):
    """The control ``c(i, j) = ||x||_{p,[t_i,t_j]}^p`` as a callable on grid indices."""
    x = _values(values)

    def c(i, j):
        if i == j:
            return 0.0
        return pvar_grid_dp(x[i : j + 1], p).value ** p

    return c


def lepingle_ratio(path, p):
    """``||M||_{p,[0,T]}^2 / [M]_T`` for one martingale trajectory.

    ``path`` needs ``vertex_values()`` (points where the p-variation is
    attained) and ``quadratic_variation()`` (trace of the sum of squared jumps).
    """
    if not p > 2:
        raise ValueError("the Lépingle inequality needs p > 2")
    qv = path.quadratic_variation()
    if qv == 0:
        raise ValueError("quadratic variation is zero")
    return pvar_grid_dp(path.vertex_values(), p).value ** 2 / qv
