"""Diagonal sensor profiles and the profile-dependent measurement factors.

A profile set stores the diagonals ``h_c`` of the C sensor matrices as a
dense ``(C, N)`` complex array. Two normalisations exist:

* distinct sampling: ``mean_c |h_{c,i}|**2 == 1`` for every i,
* identical sampling: ``sum_c |h_{c,i}|**2 == 1`` for every i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .levels import LevelPartition

__all__ = [
    "MODES",
    "DiagonalProfileSet",
    "joint_isometry_residual",
    "upsilon_distinct",
    "upsilon_identical",
    "upsilon",
    "check_isometry",
    "matrix_coherence",
    "random_isometry",
    "dft_isometry",
    "piecewise_constant_profiles",
    "banded_profiles",
    "band_violations",
]

MODES = ("distinct", "identical")

# tolerance on caller-supplied isometries
V_TOL = 1e-10


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


@dataclass(frozen=True, eq=False)
class DiagonalProfileSet:
    """C diagonal sensor profiles of length N tagged with a sampling mode."""

    h: np.ndarray
    mode: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        h = np.array(self.h, dtype=complex, copy=True)
        if h.ndim == 1:
            h = h[None, :]
        if h.ndim != 2 or h.size == 0:
            raise ValueError(f"profiles must be a (C, N) array, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("profiles contain non-finite entries")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        _check_mode(self.mode)

    @property
    def C(self) -> int:
        return self.h.shape[0]

    @property
    def N(self) -> int:
        return self.h.shape[1]

    @property
    def M(self) -> int:
        """Columns per draw of the matrix distribution (1 or C)."""
        return 1 if self.mode == "distinct" else self.C

    def permuted(self, order) -> "DiagonalProfileSet":
        return DiagonalProfileSet(self.h[np.asarray(order)], self.mode, dict(self.meta))


def joint_isometry_residual(profiles: DiagonalProfileSet) -> float:
    """``max_i |scale * sum_c |h_{c,i}|**2 - 1|`` with scale 1/C or 1."""
    energy = np.sum(np.abs(profiles.h) ** 2, axis=0)
    if profiles.mode == "distinct":
        energy = energy / profiles.C
    return float(np.max(np.abs(energy - 1.0)))


def _require(profiles, partition, mode):
    if profiles.mode != mode:
        raise ValueError(f"profile set is in {profiles.mode!r} mode, expected {mode!r}")
    if partition.N != profiles.N:
        raise ValueError(f"partition has N={partition.N}, profiles have N={profiles.N}")


def _level_max(values, partition):
    """Column-wise maximum of `values` (..., N) within each level -> (..., D)."""
    order = np.concatenate(partition.level_arrays())
    starts = np.concatenate([[0], np.cumsum(partition.sizes)[:-1]])
    return np.maximum.reduceat(values[..., order], starts, axis=-1)


def upsilon_distinct(profiles: DiagonalProfileSet, partition: LevelPartition) -> float:
    r"""Distinct-sampling factor.

    ``D**-1 * max_c sum_d ||h_c||_inf * ||P_{I_d} h_c||_inf``; O(CN).
    """
    _require(profiles, partition, "distinct")
    mag = np.abs(profiles.h)
    per_level = _level_max(mag, partition)
    return float(np.max(mag.max(axis=1) * per_level.sum(axis=1)) / partition.D)


def upsilon_identical(profiles: DiagonalProfileSet, partition: LevelPartition,
                      block: int = 512) -> float:
    r"""Identical-sampling factor.

    ``(C/D) * max_i sum_d max_{j in I_d} |sum_c conj(h_{c,i}) h_{c,j}|``.
    Evaluated exactly in row blocks of the N x N cross-Gram; O(CN^2).
    """
    _require(profiles, partition, "identical")
    h = profiles.h
    best = 0.0
    for start in range(0, profiles.N, block):
        gram = np.abs(h[:, start:start + block].conj().T @ h)
        best = max(best, float(_level_max(gram, partition).sum(axis=1).max()))
    return profiles.C / partition.D * best


def upsilon(profiles: DiagonalProfileSet, partition: LevelPartition) -> float:
    """Factor matching the profile set's mode."""
    if profiles.mode == "distinct":
        return upsilon_distinct(profiles, partition)
    return upsilon_identical(profiles, partition)


def check_isometry(V, tol: float = V_TOL) -> np.ndarray:
    """Return `V` as a complex array after checking ``V^* V = I``."""
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    C, D = V.shape
    if D > C:
        raise ValueError(f"a {C}x{D} matrix cannot be an isometry (D > C)")
    resid = np.max(np.abs(V.conj().T @ V - np.eye(D)))
    if resid > tol:
        raise ValueError(f"V is not an isometry: max |V*V - I| = {resid:.3e}")
    return V


def matrix_coherence(V) -> float:
    """Largest squared entry modulus of `V`."""
    return float(np.max(np.abs(np.asarray(V)) ** 2))


def random_isometry(C: int, D: int, rng=None) -> np.ndarray:
    """Haar-distributed C x D complex isometry (QR of a Gaussian matrix)."""
    rng = np.random.default_rng(rng)
    Z = rng.standard_normal((C, D)) + 1j * rng.standard_normal((C, D))
    Q, R = np.linalg.qr(Z)
    phases = np.diag(R) / np.abs(np.diag(R))
    return Q * phases


def dft_isometry(C: int, D: int) -> np.ndarray:
    """First D columns of the unitary C-point DFT (coherence 1/C)."""
    k = np.arange(C)[:, None] * np.arange(D)[None, :]
    return np.exp(-2j * np.pi * k / C) / np.sqrt(C)


def piecewise_constant_profiles(V, partition: LevelPartition, mode: str) -> DiagonalProfileSet:
    """Profiles ``h_{c,i} = sqrt(C/M) * V[c, level(i)]``.

    `V` must be a C x D isometry with D equal to the number of levels.
    """
    _check_mode(mode)
    V = check_isometry(V)
    C, D = V.shape
    if D != partition.D:
        raise ValueError(f"V has {D} columns but the partition has {partition.D} levels")
    M = 1 if mode == "distinct" else C
    h = np.sqrt(C / M) * V[:, partition.labels]
    return DiagonalProfileSet(h, mode, {"family": "piecewise-constant"})


def _crossfade(t, K):
    """Squared raised-cosine cross-fade weights of K hosts at positions t in (0, 1).

    Host k peaks at ``k/(K-1)``; neighbours exchange energy as cos^2/sin^2,
    so the returned rows sum to one at every position.
    """
    w = np.zeros((K, t.size))
    if K == 1:
        w[0] = 1.0
        return w
    pos = t * (K - 1)
    k = np.minimum(np.floor(pos).astype(int), K - 2)
    phi = pos - k
    cols = np.arange(t.size)
    w[k, cols] = np.cos(np.pi * phi / 2) ** 2
    w[k + 1, cols] = np.sin(np.pi * phi / 2) ** 2
    return w


def banded_profiles(C: int, N: int, r1: int = 1, r2: int = 0, shape: str = "smooth-overlap",
                    mode: str = "identical", D: int | None = None, leak: float = 0.1,
                    strict: bool = True):
    """Banded diagonal profiles on a contiguous partition.

    Sensor ``c`` may only be nonzero on levels ``c - r1, ..., c + r2``.
    ``D`` defaults to ``C - 1`` (``1`` when ``C == 1``), which with
    ``r1=1, r2=0`` gives the coil-like layout where sensor c covers levels
    c-1 and c.

    Each sensor is assigned a home level ``min(c, D-1)``. With
    ``shape='flat'`` a level's home sensors share its energy equally and
    nothing leaks. With ``shape='smooth-overlap'`` home sensors cross-fade
    with raised-cosine weights, and each sensor leaks into the adjacent
    in-band levels with amplitude ``leak`` at the shared boundary, decaying
    to zero across the neighbour by a raised cosine. Energies are finally
    normalised so that ``sum_c |h_{c,i}|**2 == C/M`` at every index,
    where ``M`` is 1 (distinct) or C (identical).

    Keeping the leak small is what keeps the factors bounded: for
    ``r1=1, r2=0, D=C-1`` both factors stay below 2 whenever
    ``leak <= (C-2)/(2C)`` (C >= 3); the default 0.1 satisfies this for
    every C >= 3, and C = 2 has a single level.

    Returns
    -------
    profiles : DiagonalProfileSet
    partition : LevelPartition
    """
    _check_mode(mode)
    if shape not in ("flat", "smooth-overlap"):
        raise ValueError(f"unknown shape {shape!r}")
    if C < 1:
        raise ValueError("need at least one sensor")
    if r1 < 0 or r2 < 0:
        raise ValueError("bandwidths must be non-negative")
    if D is None:
        D = max(C - 1, 1)
    if D > C:
        raise ValueError(f"D={D} levels cannot each host one of C={C} sensors")
    if C - D > r1:
        raise ValueError(
            f"bandwidth exceeds level range: sensor {C - 1} cannot reach level {D - 1} with r1={r1}"
        )
    if max(r1, r2) > D:
        raise ValueError(f"bandwidth exceeds level range: r1={r1}, r2={r2}, D={D}")
    if not 0 <= leak < 1 / np.sqrt(2):
        raise ValueError(f"leak must lie in [0, 1/sqrt(2)), got {leak}")
    partition = LevelPartition.contiguous(N, D, strict=strict)
    M = 1 if mode == "distinct" else C

    home = np.minimum(np.arange(C), D - 1)
    energy = np.zeros((C, N))
    leaks = np.zeros((C, N))
    for d, level in enumerate(partition.level_arrays()):
        n = level.size
        t = (np.arange(n) + 0.5) / n
        hosts = np.flatnonzero(home == d)
        if shape == "flat":
            energy[hosts[:, None], level] = 1.0 / hosts.size
            continue
        energy[hosts[:, None], level] = _crossfade(t, hosts.size)
        for c in range(C):
            if home[c] == d - 1 and d <= c + r2:
                # neighbour on the right: distance from the left edge
                leaks[c, level] = leak * (1 + np.cos(np.pi * t)) / 2
            elif home[c] == d + 1 and d >= c - r1:
                leaks[c, level] = leak * (1 + np.cos(np.pi * (1 - t))) / 2
    leak_energy = np.sum(leaks**2, axis=0)
    if np.any(leak_energy >= 1):
        raise ValueError("leak amplitudes exhaust the available energy")
    energy = energy * (1 - leak_energy) + leaks**2
    h = np.sqrt(C / M * energy)
    meta = {"family": "banded", "r1": r1, "r2": r2, "shape": shape, "D": D}
    if shape == "smooth-overlap":
        meta["taper"] = "raised-cosine"
        meta["leak"] = leak
    return DiagonalProfileSet(h, mode, meta), partition


def band_violations(profiles: DiagonalProfileSet, partition: LevelPartition,
                    r1: int, r2: int) -> list[tuple[int, int]]:
    """(sensor, index) pairs where a profile is nonzero outside its band."""
    out = []
    labels = partition.labels
    for c in range(profiles.C):
        for i in np.flatnonzero(np.abs(profiles.h[c]) > 0):
            if not c - r1 <= labels[i] <= c + r2:
                out.append((c, int(i)))
    return out
