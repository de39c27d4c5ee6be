"""Random walk among i.i.d. random conductances on Z^d.

The environment is realised lazily through a counter-based hash: the weight
of bond ``{x, x + e_axis}`` is a deterministic function of (environment key,
axis, x).  Same key, same environment, whatever order the bonds are visited
in, and nothing has to be stored for bonds the walker never touches.

The simulator is the direct exponential-clock method (holding time with rate
``sum_y eta(x, y)``, then a neighbour chosen proportionally to its weight),
vectorised across replicas.  Walk randomness is hashed from (walk key, step,
slot), so replica ``r`` follows the same path in any batch.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import rng
from ..tensor_path import JumpPath

CONSTANT = "constant"
UNIFORM = "uniform"
TWO_POINT = "two_point"


@dataclass(frozen=True)
class ConductanceLaw:
    """Law of a single conductance.

    * ``constant``: ``eta = a``
    * ``uniform``: ``eta ~ U[a, b]``
    * ``two_point``: ``eta = a`` with probability ``q``, else ``b``
    """

    kind: str
    a: float
    b: float = None
    q: float = 0.5

    def __post_init__(self):
        if self.kind not in (CONSTANT, UNIFORM, TWO_POINT):
            raise ValueError(f"unknown conductance law {self.kind!r}")
        if self.kind == CONSTANT:
            object.__setattr__(self, "b", self.a)
        if self.b is None:
            raise ValueError(f"law {self.kind!r} needs both a and b")
        if not 0 < self.a <= self.b:
            raise ValueError("conductances need 0 < a <= b (no percolation, bounded above)")
        if self.kind == TWO_POINT and not 0 <= self.q <= 1:
            raise ValueError("two-point weight q must be in [0, 1]")

    @classmethod
    def constant(cls, kappa):
        return cls(CONSTANT, kappa)

    @classmethod
    def uniform(cls, a, b):
        return cls(UNIFORM, a, b)

    @classmethod
    def two_point(cls, a, b, q=0.5):
        return cls(TWO_POINT, a, b, q)

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d["a"]), None if d.get("b") is None else float(d["b"]),
                   float(d.get("q", 0.5)))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "q": self.q}

    @property
    def bounds(self):
        return self.a, self.b

    def mean(self):
        if self.kind == CONSTANT:
            return self.a
        if self.kind == UNIFORM:
            return 0.5 * (self.a + self.b)
        return self.q * self.a + (1 - self.q) * self.b

    def harmonic_mean(self):
        """``1 / E[1/eta]`` -- the effective conductance in d = 1."""
        if self.kind == CONSTANT:
            return self.a
        if self.kind == UNIFORM:
            if self.a == self.b:
                return self.a
            return (self.b - self.a) / np.log(self.b / self.a)
        return 1.0 / (self.q / self.a + (1 - self.q) / self.b)

    def from_unit(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == CONSTANT:
            return np.full(u.shape, self.a)
        if self.kind == UNIFORM:
            return self.a + (self.b - self.a) * u
        return np.where(u < self.q, self.a, self.b)


def bond_weights(law, env_keys, sites, axis):
    """Weights of bonds ``{x, x + e_axis}`` for lower endpoints ``sites`` (M, d)."""
    sites = np.asarray(sites, dtype=np.int64)
    words = [rng.STREAM_ENV, axis] + [sites[:, c] for c in range(sites.shape[1])]
    return law.from_unit(rng.uniforms(env_keys, *words))


@dataclass
class ConductanceEnvironment:
    """A lazily realised i.i.d. conductance field; weights are cached on first touch."""

    law: ConductanceLaw
    dim: int
    seed: int
    realized: dict = field(default_factory=dict)
    frozen: bool = False

    @property
    def key(self):
        return int(rng.replica_keys(self.seed, [0])[0])

    def weight(self, x, axis):
        """Weight of the bond ``{x, x + e_axis}``."""
        bond = (tuple(int(v) for v in x), int(axis))
        w = self.realized.get(bond)
        if w is None:
            if self.frozen:
                raise KeyError(f"bond {bond} outside the pre-generated box")
            w = float(bond_weights(self.law, self.key, np.array([bond[0]]), axis)[0])
            self.realized[bond] = w
        return w

    def eta(self, x, y):
        """Symmetric conductance of a nearest-neighbour pair."""
        x, y = np.asarray(x), np.asarray(y)
        diff = y - x
        if np.abs(diff).sum() != 1:
            raise ValueError("x and y are not nearest neighbours")
        axis = int(np.flatnonzero(diff)[0])
        lower = x if diff[axis] > 0 else y
        return self.weight(lower, axis)

    def realize_box(self, radius):
        """Pre-generate every bond touching ``[-radius, radius]^d`` and freeze the map.

        Used for quenched runs, where a single environment is shared by all
        replicas and must not change afterwards.
        """
        axes = [np.arange(-radius - 1, radius + 1)] * self.dim
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, self.dim)
        for axis in range(self.dim):
            w = bond_weights(self.law, self.key, grid, axis)
            for site, wi in zip(map(tuple, grid.tolist()), w):
                self.realized[(site, axis)] = float(wi)
        self.frozen = True
        return self


class JumpObserver:
    """Hook interface for :func:`run_conductance_batch`."""

    def start(self, m, d):
        pass

    def holding(self, rows, x, rates_plus, rates_minus, t0, t1):
        """Walker rows sit at ``x`` over ``[t0, t1)`` (t1 clipped to the horizon)."""

    def jump(self, rows, x_before, delta, t):
        pass

    def finish(self):
        pass


def run_conductance_batch(law, d, horizon, env_keys, walk_keys, observers=(), max_steps=None):
    """Simulate ``len(walk_keys)`` walks on ``[0, horizon]`` started at the origin.

    Positions are integer lattice coordinates and times are microscopic; the
    observers see every holding interval and every jump in time order per
    replica.  Returns final positions and jump counts.
    """
    walk_keys = np.asarray(walk_keys, dtype=np.uint64)
    env_keys = np.broadcast_to(np.asarray(env_keys, dtype=np.uint64), walk_keys.shape).copy()
    m = walk_keys.shape[0]
    x = np.zeros((m, d), dtype=np.int64)
    t = np.zeros(m)
    counts = np.zeros(m, dtype=np.int64)
    rows = np.arange(m)
    for ob in observers:
        ob.start(m, d)
    eye = np.eye(d, dtype=np.int64)
    step = 0
    while rows.size:
        if max_steps is not None and step >= max_steps:
            raise RuntimeError("step budget exhausted")
        xa = x[rows]
        ek = env_keys[rows]
        wk = walk_keys[rows]
        plus = np.empty((rows.size, d))
        minus = np.empty((rows.size, d))
        for axis in range(d):
            plus[:, axis] = bond_weights(law, ek, xa, axis)
            minus[:, axis] = bond_weights(law, ek, xa - eye[axis], axis)
        rates = np.concatenate([plus, minus], axis=1)
        total = rates.sum(axis=1)
        u1 = rng.uniforms(wk, rng.STREAM_WALK, step, 0)
        u2 = rng.uniforms(wk, rng.STREAM_WALK, step, 1)
        t_new = t[rows] - np.log1p(-u1) / total
        jumps = t_new <= horizon
        t_end = np.minimum(t_new, horizon)
        for ob in observers:
            ob.holding(rows, xa, plus, minus, t[rows], t_end)
        if jumps.any():
            jr = rows[jumps]
            cum = np.cumsum(rates[jumps], axis=1)
            target = u2[jumps] * total[jumps]
            choice = np.minimum((cum <= target[:, None]).sum(axis=1), 2 * d - 1)
            axis = choice % d
            sign = np.where(choice < d, 1, -1)
            delta = eye[axis] * sign[:, None]
            for ob in observers:
                ob.jump(jr, xa[jumps], delta, t_new[jumps])
            x[jr] += delta
            t[jr] = t_new[jumps]
            counts[jr] += 1
        rows = rows[jumps]
        step += 1
    for ob in observers:
        ob.finish()
    return x, counts


class PathRecorder(JumpObserver):
    def start(self, m, d):
        self.times = [[] for _ in range(m)]
        self.incs = [[] for _ in range(m)]

    def jump(self, rows, x_before, delta, t):
        for r, dv, tv in zip(rows.tolist(), delta.tolist(), t.tolist()):
            self.times[r].append(tv)
            self.incs[r].append(dv)

    def paths(self, d, horizon):
        return [
            JumpPath(np.zeros(d), np.array(ts), np.array(inc, dtype=np.float64).reshape(-1, d), horizon)
            for ts, inc in zip(self.times, self.incs)
        ]


class CompensatorRecorder(JumpObserver):
    """Records the martingale part ``N = X - int_0^t F(eta_s) ds``.

    ``F = sum_{|y|=1} y eta(0, y)`` is the local drift of the environment seen
    from the walker, so between jumps N moves linearly with velocity ``-F``.
    """

    def start(self, m, d):
        self.segments = [[] for _ in range(m)]  # (t0, t1, drift vector)

    def holding(self, rows, x, plus, minus, t0, t1):
        drift = plus - minus
        for r, a, b, f in zip(rows.tolist(), t0.tolist(), t1.tolist(), drift.tolist()):
            self.segments[r].append((a, b, f))

    def martingales(self, walks):
        return [CompensatedJumpPath.from_segments(w, s) for w, s in zip(walks, self.segments)]


@dataclass(frozen=True)
class CompensatedJumpPath:
    """A step path minus a continuous piecewise-linear compensator.

    ``vertices`` lists the path at every left limit and every post-jump value,
    which is where its p-variation is attained (the path is linear between).
    """

    times: np.ndarray
    vertices: np.ndarray
    jumps: np.ndarray

    @classmethod
    def from_segments(cls, walk, segments):
        d = walk.dim
        times, verts = [0.0], [np.zeros(d)]
        cur = np.zeros(d)
        comp = np.zeros(d)
        jumps = walk.jump_increments
        k = 0
        for a, b, f in segments:
            comp = comp + np.asarray(f) * (b - a)
            left = cur - comp
            times.append(b)
            verts.append(left)
            if k < walk.n_jumps and b == walk.jump_times[k]:
                cur = cur + jumps[k]
                times.append(b)
                verts.append(cur - comp)
                k += 1
        return cls(np.array(times), np.array(verts), np.array(jumps))

    def vertex_values(self):
        return self.vertices

    def quadratic_variation(self):
        return float(np.sum(self.jumps**2))


def simulate_conductance_walk(env, horizon, seed):
    """One walk from the origin on ``[0, horizon]`` in the environment ``env``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    walk_key = rng.replica_keys(seed, [0])
    rec = PathRecorder()
    run_conductance_batch(env.law, env.dim, horizon, np.uint64(env.key), walk_key, [rec])
    path = rec.paths(env.dim, horizon)[0]
    # mirror the touched bonds into the cache so the environment can be inspected
    pos = path.values().astype(np.int64)
    for x in pos:
        for axis in range(env.dim):
            env.weight(x, axis)
            lower = x.copy()
            lower[axis] -= 1
            env.weight(lower, axis)
    return path



class LiftAccumulator(JumpObserver):
    """Running Itô, interpolated (trapezoid) and gap tensors of the rescaled walk.

    Sums are kept in lattice units, where every term is an integer or a half
    integer, so they are exact in float64; the rescaled tensors are the sums
    divided by ``n``.  After every jump the identity ``strato - ito = gap`` is
    checked on the rescaled values and the worst relative defect per replica
    is kept.
    """

    def __init__(self, n):
        self.n = float(n)

    def start(self, m, d):
        self._x = np.zeros((m, d))
        self._ito = np.zeros((m, d, d))
        self._strato = np.zeros((m, d, d))
        self._gap = np.zeros((m, d, d))
        self.max_defect = np.zeros(m)

    def jump(self, rows, x_before, delta, t):
        xb = x_before.astype(np.float64)
        dx = delta.astype(np.float64)
        ito = self._ito[rows] + xb[:, :, None] * dx[:, None, :]
        strato = self._strato[rows] + (xb + 0.5 * dx)[:, :, None] * dx[:, None, :]
        gap = self._gap[rows] + 0.5 * dx[:, :, None] * dx[:, None, :]
        self._ito[rows] = ito
        self._strato[rows] = strato
        self._gap[rows] = gap
        self._x[rows] = xb + dx
        s = strato / self.n
        defect = np.abs(s - ito / self.n - gap / self.n).max(axis=(1, 2))
        rel = defect / np.maximum(1.0, np.abs(s).max(axis=(1, 2)))
        self.max_defect[rows] = np.maximum(self.max_defect[rows], rel)

    @property
    def x(self):
        return self._x / np.sqrt(self.n)

    @property
    def ito(self):
        return self._ito / self.n

    @property
    def strato(self):
        return self._strato / self.n

    @property
    def gap(self):
        return self._gap / self.n

    @property
    def qv(self):
        """Trace of ``sum (dX^n)^{(x)2}`` per replica."""
        return np.trace(self._gap, axis1=1, axis2=2) * 2.0 / self.n
