"""Isotropic row distributions and assembly of multi-sensor measurement matrices.

A draw ``B`` from the matrix distribution F is an ``N x M`` array; the
measurement matrix stacks ``B_i^*`` for p = m/M i.i.d. draws and scales by
``1/sqrt(p)``. Distinct sampling has M = 1 and ``B = H_c^* a`` with the
sensor c uniform; identical sampling has M = C and
``B = [H_1^* a | ... | H_C^* a]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .profiles import DiagonalProfileSet

__all__ = [
    "RowDistribution",
    "MatrixDistribution",
    "MeasurementEnsemble",
    "matrix_distribution",
    "assemble_distinct",
    "assemble_identical",
    "assemble",
    "isotropy_residual",
]

# largest N for which the 2**N random-sign atoms are enumerated
MAX_SIGN_ENUM = 16


class RowDistribution:
    """Discrete isotropic distribution of vectors in C^N.

    ``kind='fourier'``: uniform over the N vectors ``exp(2j*pi*k*n/N)``,
    so that the measurement rows ``a^*`` are rows of the unscaled DFT.
    ``kind='random-sign'``: i.i.d. +-1 entries.

    Both have coherence ``mu = max ||a||_inf**2 = 1``.
    """

    KINDS = ("fourier", "random-sign")

    def __init__(self, kind: str, N: int):
        if kind not in self.KINDS:
            raise ValueError(f"unknown distribution kind {kind!r}")
        if N < 1:
            raise ValueError("N must be positive")
        self.kind = kind
        self.N = int(N)

    def __repr__(self):
        return f"RowDistribution({self.kind!r}, {self.N})"

    @property
    def mu(self) -> float:
        return 1.0

    @property
    def n_atoms(self) -> int:
        return self.N if self.kind == "fourier" else 2**self.N

    @property
    def is_enumerable(self) -> bool:
        return self.kind == "fourier" or self.N <= MAX_SIGN_ENUM

    def _fourier(self, k):
        n = np.arange(self.N)
        return np.exp(2j * np.pi * np.outer(k, n) / self.N)

    def draw(self, rng, k: int) -> np.ndarray:
        """`k` i.i.d. vectors as rows of a ``(k, N)`` array."""
        if self.kind == "fourier":
            return self._fourier(rng.integers(0, self.N, size=k))
        signs = rng.integers(0, 2, size=(k, self.N))
        return (2.0 * signs - 1.0).astype(complex)

    def atoms(self):
        """Equal weights and all atoms ``(n_atoms, N)``."""
        if not self.is_enumerable:
            raise ValueError(f"{self.n_atoms} random-sign atoms are too many to enumerate")
        if self.kind == "fourier":
            a = self._fourier(np.arange(self.N))
        else:
            a = np.array(list(itertools.product((-1.0, 1.0), repeat=self.N)), dtype=complex)
        return np.full(a.shape[0], 1.0 / a.shape[0]), a


class MatrixDistribution:
    """Distribution F of ``N x M`` matrices built from profiles and row laws."""

    def __init__(self, profiles: DiagonalProfileSet | None, dists):
        if isinstance(dists, RowDistribution):
            dists = [dists]
        if profiles is None:
            profiles = DiagonalProfileSet(np.ones((1, dists[0].N)), "distinct")
        if profiles.mode == "distinct" and len(dists) == 1:
            dists = list(dists) * profiles.C
        if profiles.mode == "distinct" and len(dists) != profiles.C:
            raise ValueError(f"need {profiles.C} row distributions, got {len(dists)}")
        if profiles.mode == "identical" and len(dists) != 1:
            raise ValueError("identical sampling uses a single row distribution")
        if any(d.N != profiles.N for d in dists):
            raise ValueError("row distribution dimension does not match the profiles")
        self.profiles = profiles
        self.dists = list(dists)

    @property
    def N(self) -> int:
        return self.profiles.N

    @property
    def M(self) -> int:
        return self.profiles.M

    @property
    def mode(self) -> str:
        return self.profiles.mode

    @property
    def mu(self) -> float:
        return max(d.mu for d in self.dists)

    @property
    def is_enumerable(self) -> bool:
        return all(d.is_enumerable for d in self.dists)

    def _blocks(self, sensors, a):
        # B = H_c^* a has entries conj(h_{c,i}) a_i
        h = self.profiles.h
        if self.mode == "distinct":
            return (np.conj(h[sensors]) * a)[:, :, None]
        return np.conj(h).T[None, :, :] * a[:, :, None]

    def atoms(self):
        """Weights ``(K,)`` and atoms ``(K, N, M)`` of the finite family."""
        if self.mode == "identical":
            w, a = self.dists[0].atoms()
            return w, self._blocks(None, a)
        weights, blocks = [], []
        C = self.profiles.C
        for c, dist in enumerate(self.dists):
            w, a = dist.atoms()
            weights.append(w / C)
            blocks.append(self._blocks(np.full(a.shape[0], c), a))
        return np.concatenate(weights), np.concatenate(blocks)

    def sample(self, rng, T: int) -> np.ndarray:
        """`T` i.i.d. draws ``(T, N, M)``."""
        rng = np.random.default_rng(rng)
        if self.mode == "identical":
            return self._blocks(None, self.dists[0].draw(rng, T))
        sensors = rng.integers(0, self.profiles.C, size=T)
        a = np.empty((T, self.N), dtype=complex)
        for c, dist in enumerate(self.dists):
            sel = sensors == c
            a[sel] = dist.draw(rng, int(sel.sum()))
        return self._blocks(sensors, a)


def matrix_distribution(profiles=None, dists=None, kind="fourier"):
    """Convenience constructor; `dists` defaults to one `kind` law of size N."""
    if dists is None:
        dists = RowDistribution(kind, profiles.N)
    return MatrixDistribution(profiles, dists)


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """Assembled ``m x N`` measurement matrix with row provenance.

    ``A`` already includes the ``1/sqrt(p)`` factor. ``sensor[r]`` and
    ``draw[r]`` give the sensor index and draw index behind row r.
    """

    A: np.ndarray
    sensor: np.ndarray
    draw: np.ndarray
    C: int
    M: int
    mode: str
    allocation: str
    seed: object = None

    def __post_init__(self):
        for name in ("A", "sensor", "draw"):
            getattr(self, name).setflags(write=False)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.m // self.M

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.p)

    @property
    def shape(self):
        return self.A.shape

    def apply(self, z):
        return self.A @ z

    def adjoint(self, r):
        return self.A.conj().T @ r

    def metadata(self) -> dict:
        return {
            "m": self.m, "N": self.N, "C": self.C, "M": self.M, "p": self.p,
            "scale": self.scale, "mode": self.mode, "allocation": self.allocation,
            "seed": self.seed if isinstance(self.seed, (int, type(None))) else repr(self.seed),
        }


def _seed_record(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def assemble_distinct(profiles: DiagonalProfileSet, dists, m: int,
                      allocation: str = "equal-split", seed=None) -> MeasurementEnsemble:
    """Distinct sampling: independent rows per sensor, global scale ``1/sqrt(m)``.

    ``allocation='equal-split'`` draws m/C rows for every sensor in turn;
    ``'random-mixture'`` draws the sensor of each row uniformly at random.
    """
    if profiles.mode != "distinct":
        raise ValueError("assemble_distinct needs a distinct-mode profile set")
    F = MatrixDistribution(profiles, dists)
    C = profiles.C
    rng = np.random.default_rng(seed)
    if allocation == "equal-split":
        if m % C:
            raise ValueError(f"m={m} is not divisible by C={C}")
        sensor = np.repeat(np.arange(C), m // C)
    elif allocation == "random-mixture":
        sensor = rng.integers(0, C, size=m)
    else:
        raise ValueError(f"unknown allocation {allocation!r}")
    a = np.empty((m, profiles.N), dtype=complex)
    draw = np.empty(m, dtype=int)
    for c in range(C):
        sel = np.flatnonzero(sensor == c)
        a[sel] = F.dists[c].draw(rng, sel.size)
        draw[sel] = np.arange(sel.size)
    A = np.conj(a) * profiles.h[sensor] / np.sqrt(m)
    return MeasurementEnsemble(A, sensor, draw, C, 1, "distinct", allocation, _seed_record(seed))


def assemble_identical(profiles: DiagonalProfileSet, dist: RowDistribution, m: int,
                       seed=None) -> MeasurementEnsemble:
    """Identical sampling: p = m/C shared draws, C consecutive rows per draw."""
    if profiles.mode != "identical":
        raise ValueError("assemble_identical needs an identical-mode profile set")
    if isinstance(dist, (list, tuple)):
        raise ValueError("identical sampling uses a single row distribution")
    if dist.N != profiles.N:
        raise ValueError("row distribution dimension does not match the profiles")
    C = profiles.C
    if m % C:
        raise ValueError(f"m={m} is not divisible by C={C}")
    p = m // C
    rng = np.random.default_rng(seed)
    a = dist.draw(rng, p)
    # row (i, c) = a_i^* H_c
    A = (np.conj(a)[:, None, :] * profiles.h[None, :, :]).reshape(m, profiles.N) / np.sqrt(p)
    sensor = np.tile(np.arange(C), p)
    draw = np.repeat(np.arange(p), C)
    return MeasurementEnsemble(A, sensor, draw, C, C, "identical", "shared", _seed_record(seed))


def assemble(profiles: DiagonalProfileSet, kind: str, m: int, seed=None,
             allocation: str = "equal-split") -> MeasurementEnsemble:
    """Assemble with a single `kind` row law in the profile set's mode."""
    dist = RowDistribution(kind, profiles.N)
    if profiles.mode == "distinct":
        return assemble_distinct(profiles, dist, m, allocation=allocation, seed=seed)
    return assemble_identical(profiles, dist, m, seed=seed)


def isotropy_residual(F, T: int | None = None, rng=None) -> float:
    """``max |E(B B^*) - I|`` by exact enumeration (``T=None``) or T draws."""
    if isinstance(F, RowDistribution):
        F = MatrixDistribution(None, F)
    if T is None:
        w, B = F.atoms()
    else:
        B = F.sample(rng, T)
        w = np.full(T, 1.0 / T)
    second = np.einsum("k,kim,kjm->ij", w, B, B.conj())
    return float(np.max(np.abs(second - np.eye(F.N))))
