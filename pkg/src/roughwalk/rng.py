"""Counter-based random streams.

Every random number in the Monte-Carlo code is a pure function of a key and a
counter, so a replica produces the same path no matter how replicas are
batched or spread over workers.  The mixer is SplitMix64's finaliser.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# stream tags
STREAM_REPLICA = 0x5245504C
STREAM_ENV = 0x454E5649
STREAM_WALK = 0x57414C4B


def _as_u64(x):
    a = np.asarray(x)
    if a.dtype == np.uint64:
        return a
    if a.dtype.kind == "i":
        return a.astype(np.int64).view(np.uint64)
    return a.astype(np.uint64)


def mix64(z):
    """SplitMix64 finaliser, elementwise on uint64 arrays (wrapping arithmetic)."""
    z = np.array(_as_u64(z), dtype=np.uint64, ndmin=1)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        z = z ^ (z >> _S31)
    return z


def hash_words(key, *words):
    """Hash a key with a sequence of integer words; all arguments broadcast."""
    h = mix64(key)
    for w in words:
        h = mix64(h ^ np.array(_as_u64(w), dtype=np.uint64, ndmin=1))
    return h


def to_unit(h):
    """Map uint64 hashes to floats in [0, 1) using the top 53 bits."""
    return (h >> _S11).astype(np.float64) * _INV53


def uniforms(key, *words):
    return to_unit(hash_words(key, *words))


def replica_keys(base_seed, indices):
    """Per-replica uint64 keys: hash(base_seed, replica_index)."""
    idx = np.asarray(indices, dtype=np.int64)
    return hash_words(int(base_seed) & 0xFFFFFFFFFFFFFFFF, STREAM_REPLICA, idx)


def replica_generator(key):
    """A numpy Generator seeded from one replica key."""
    return np.random.Generator(np.random.PCG64(int(key)))
