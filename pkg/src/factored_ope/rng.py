"""Deterministic per-trajectory random streams.

Trajectory ``n`` of a dataset draws its uniforms from a dedicated slice of a
SplitMix64 sequence keyed by the master seed: draw ``i`` of trajectory ``n``
sits at counter position ``n * 2**24 + i``.  Values therefore depend only on
``(seed, n, i)``, never on generation order, chunking, or parallelism, and a
trajectory can be regenerated in isolation.  The per-trajectory draw budget is
``2**24``, i.e. horizons up to ~5.6M steps for two-factor MDPs.
"""

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_TRAJ_SHIFT = 24
_DRAWS_PER_TRAJ = 1 << _TRAJ_SHIFT


def _finalize(z: np.ndarray) -> np.ndarray:
    # SplitMix64 output function (Steele, Lea & Flood 2014); uint64 wraparound
    # is the intended arithmetic.
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _stream_origin(seed: int) -> np.uint64:
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        return _finalize(_finalize(s + _GOLDEN) ^ np.uint64(0x6A09E667F3BCC909))


def trajectory_uniforms(seed: int, first: int, count: int, draws: int) -> np.ndarray:
    """Uniform[0,1) draws for trajectories ``first..first+count``.

    Returns an array of shape ``(count, draws)`` whose row ``k`` holds the
    first ``draws`` values of the stream for trajectory ``first + k``.
    """
    if draws > _DRAWS_PER_TRAJ:
        raise ValueError(f"per-trajectory draw budget is {_DRAWS_PER_TRAJ}, requested {draws}")
    origin = _stream_origin(seed)
    with np.errstate(over="ignore"):
        traj = np.arange(first, first + count, dtype=np.uint64) << np.uint64(_TRAJ_SHIFT)
        pos = traj[:, None] + np.arange(1, draws + 1, dtype=np.uint64)[None, :]
        bits = _finalize(origin + pos * _GOLDEN)
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed derived from heterogeneous parts (ints/strings).

    Used to give every (trial, policy-role, grid-coordinate) combination its
    own master seed in a reproducible, platform-independent way.
    """
    h = np.uint64(0x243F6A8885A308D3)
    with np.errstate(over="ignore"):
        for part in parts:
            if isinstance(part, (int, np.integer)):
                h = _finalize(h ^ np.uint64(int(part) & 0xFFFFFFFFFFFFFFFF))
            else:
                for b in str(part).encode("utf-8"):
                    h = _finalize(h ^ np.uint64(b))
            h = _finalize(h + _GOLDEN)
    return int(h & np.uint64(0x7FFFFFFFFFFFFFFF))
