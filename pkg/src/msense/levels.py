"""Level partitions and the sparse-and-distributed signal model.

Indices are 0-based throughout the Python API. The JSON partition format
used by the command line stores 1-based indices (see :mod:`msense.io`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "PartitionError",
    "LevelPartition",
    "LocalSparsity",
    "validate_partition",
    "level_caps",
    "level_sparsities",
    "is_sparse_distributed",
    "best_distributed_approximation",
    "count_admissible_supports",
    "sample_sparse_distributed",
]


class PartitionError(ValueError):
    """Raised when a set of levels does not partition ``{0, ..., N-1}``."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def validate_partition(N: int, levels: Sequence[Sequence[int]]) -> None:
    """Check that `levels` partitions ``range(N)``.

    Raises
    ------
    PartitionError
        On the first empty level, out-of-range index, duplicated index or
        uncovered index. ``err.index`` holds the offending index (or level
        number for an empty level).
    """
    if N < 1:
        raise PartitionError(f"N must be positive, got {N}")
    if len(levels) < 1:
        raise PartitionError("a partition needs at least one level")
    if len(levels) > N:
        raise PartitionError(f"{len(levels)} levels cannot partition {N} indices")
    owner = np.full(N, -1, dtype=int)
    for d, level in enumerate(levels):
        if len(level) == 0:
            raise PartitionError(f"level {d} is empty", index=d)
        for j in level:
            j = int(j)
            if not 0 <= j < N:
                raise PartitionError(f"index {j} in level {d} is out of range", index=j)
            if owner[j] >= 0:
                raise PartitionError(
                    f"index {j} appears in levels {owner[j]} and {d}", index=j
                )
            owner[j] = d
    missing = np.flatnonzero(owner < 0)
    if missing.size:
        raise PartitionError(f"index {missing[0]} is not covered", index=int(missing[0]))


@dataclass(frozen=True)
class LevelPartition:
    """Ordered partition of ``range(N)`` into D non-empty levels."""

    N: int
    levels: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        levels = tuple(tuple(int(j) for j in level) for level in self.levels)
        object.__setattr__(self, "levels", levels)
        validate_partition(self.N, levels)

    @classmethod
    def contiguous(cls, N: int, D: int, strict: bool = True) -> "LevelPartition":
        """Split ``range(N)`` into D consecutive blocks.

        Block ``d`` is ``range(floor(d*N/D), floor((d+1)*N/D))``. With
        ``strict`` (default) D must divide N so that all blocks have equal
        size.
        """
        if D < 1 or D > N:
            raise PartitionError(f"cannot split {N} indices into {D} levels")
        if strict and N % D:
            raise PartitionError(f"D={D} does not divide N={N}")
        edges = [(d * N) // D for d in range(D + 1)]
        return cls(N, tuple(tuple(range(edges[d], edges[d + 1])) for d in range(D)))

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "LevelPartition":
        edges = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        return cls(int(edges[-1]), tuple(tuple(range(a, b)) for a, b in zip(edges[:-1], edges[1:])))

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "LevelPartition":
        """Build from a per-index level label array (labels 0..D-1)."""
        labels = np.asarray(labels, dtype=int)
        D = int(labels.max()) + 1 if labels.size else 0
        return cls(labels.size, tuple(tuple(np.flatnonzero(labels == d)) for d in range(D)))

    @property
    def D(self) -> int:
        return len(self.levels)

    @cached_property
    def labels(self) -> np.ndarray:
        """Level number of every index, shape ``(N,)``."""
        out = np.empty(self.N, dtype=int)
        for d, level in enumerate(self.levels):
            out[list(level)] = d
        out.setflags(write=False)
        return out

    @cached_property
    def sizes(self) -> np.ndarray:
        out = np.array([len(level) for level in self.levels], dtype=int)
        out.setflags(write=False)
        return out

    def level_arrays(self) -> list[np.ndarray]:
        return [np.asarray(level, dtype=int) for level in self.levels]


@dataclass(frozen=True)
class LocalSparsity:
    """Per-level nonzero counts of a vector."""

    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    @property
    def max(self) -> int:
        return int(max(self.counts)) if self.counts else 0


def _check_dims(x, partition):
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != partition.N:
        raise ValueError(f"vector of shape {x.shape} does not match N={partition.N}")
    return x


def _check_sl(s, lam, partition):
    if not 1 <= s <= partition.N:
        raise ValueError(f"s must lie in [1, N={partition.N}], got {s}")
    if not 1 <= lam <= partition.D:
        raise ValueError(f"lambda must lie in [1, D={partition.D}], got {lam}")


def level_caps(partition: LevelPartition, s: int, lam: float) -> np.ndarray:
    """Per-level nonzero budget ``min(|I_d|, floor(lam*s/D))``."""
    # small slack so that e.g. lam*s/D = 2.9999999999 from rounding counts as 3
    cap = int(math.floor(lam * s / partition.D + 1e-9))
    return np.minimum(partition.sizes, cap)


def level_sparsities(x, partition: LevelPartition) -> LocalSparsity:
    x = _check_dims(x, partition)
    nz = np.abs(x) > 0
    counts = np.bincount(partition.labels[nz], minlength=partition.D)
    return LocalSparsity(tuple(int(c) for c in counts))


def is_sparse_distributed(x, partition: LevelPartition, s: int, lam: float) -> bool:
    """Membership test for the set of s-sparse, lambda-distributed vectors."""
    x = _check_dims(x, partition)
    _check_sl(s, lam, partition)
    local = level_sparsities(x, partition)
    return local.total <= s and bool(np.all(np.array(local.counts) <= level_caps(partition, s, lam)))


def best_distributed_approximation(x, partition: LevelPartition, s: int, lam: float):
    """Best l1 approximation of `x` by an s-sparse, lambda-distributed vector.

    Admissible supports are the independent sets of a partition matroid
    (one capacity per level) truncated at rank `s`, so taking entries in
    order of decreasing magnitude while capacity remains is optimal. Ties
    go to the lower index.

    Returns
    -------
    support : ndarray of int
        Sorted retained indices (nonzero entries only).
    sigma : float
        l1 norm of the discarded entries.
    """
    x = _check_dims(x, partition)
    _check_sl(s, lam, partition)
    mag = np.abs(x)
    caps = level_caps(partition, s, lam)
    used = np.zeros(partition.D, dtype=int)
    labels = partition.labels
    keep = []
    for j in np.argsort(-mag, kind="stable"):
        if len(keep) == s or mag[j] == 0:
            break
        d = labels[j]
        if used[d] < caps[d]:
            used[d] += 1
            keep.append(int(j))
    support = np.array(sorted(keep), dtype=int)
    # sum the discarded entries directly: total - kept cancels tiny entries to 0
    rest = np.ones(mag.size, dtype=bool)
    rest[support] = False
    return support, float(mag[rest].sum())


def _support_count_table(sizes, caps, s):
    # ways[d][t]: number of supports with t nonzeros drawn from levels d..D-1
    D = len(sizes)
    ways = [[0] * (s + 1) for _ in range(D + 1)]
    ways[D][0] = 1
    for d in range(D - 1, -1, -1):
        for t in range(s + 1):
            ways[d][t] = sum(
                math.comb(int(sizes[d]), k) * ways[d + 1][t - k]
                for k in range(min(int(caps[d]), t) + 1)
            )
    return ways


def count_admissible_supports(partition: LevelPartition, s: int, lam: float) -> int:
    """Number of supports of size exactly `s` obeying the level caps."""
    caps = level_caps(partition, s, lam)
    return _support_count_table(partition.sizes, caps, s)[0][s]


def sample_sparse_distributed(partition: LevelPartition, s: int, lam: float = 1.0,
                              magnitude: str = "phase", rng=None) -> np.ndarray:
    """Draw a vector with exactly `s` nonzeros that is lambda-distributed.

    The support is uniform over all admissible supports: per-level counts
    are drawn with probability proportional to the number of supports they
    admit, then each level's subset is uniform.

    Parameters
    ----------
    magnitude : {'phase', 'gaussian'}
        ``'phase'`` gives unit-modulus complex values with uniform phase,
        ``'gaussian'`` gives standard normal real values.
    rng : int, Generator or None
    """
    rng = np.random.default_rng(rng)
    if magnitude not in ("phase", "gaussian"):
        raise ValueError(f"unknown magnitude model {magnitude!r}")
    dtype = complex if magnitude == "phase" else float
    x = np.zeros(partition.N, dtype=dtype)
    if s == 0:
        return x
    _check_sl(s, lam, partition)
    caps = level_caps(partition, s, lam)
    if int(caps.sum()) < s:
        raise ValueError(
            f"level caps {caps.tolist()} cannot hold {s} nonzeros (lambda={lam})"
        )
    sizes = partition.sizes
    ways = _support_count_table(sizes, caps, s)
    remaining = s
    support = []
    for d, level in enumerate(partition.level_arrays()):
        ks = range(min(int(caps[d]), remaining) + 1)
        weights = [math.comb(int(sizes[d]), k) * ways[d + 1][remaining - k] for k in ks]
        # exact integer sampling; weights can exceed int64 range for large N
        total = sum(weights)
        r = int(rng.integers(total)) if total < 2**63 else _big_randbelow(rng, total)
        for k, w in zip(ks, weights):
            if r < w:
                break
            r -= w
        if k:
            support.extend(rng.choice(level, size=k, replace=False).tolist())
        remaining -= k
    support = np.sort(np.array(support, dtype=int))
    if magnitude == "phase":
        x[support] = np.exp(2j * np.pi * rng.random(s))
    else:
        x[support] = rng.standard_normal(s)
    return x


def _big_randbelow(rng, n):
    # rejection sampling on n.bit_length() random bits
    nbits = n.bit_length()
    nbytes = (nbits + 7) // 8
    while True:
        value = int.from_bytes(rng.bytes(nbytes), "little") >> (8 * nbytes - nbits)
        if value < n:
            return value
