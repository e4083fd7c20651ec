"""Local coherence of a matrix distribution and measurement-count bounds.

For a support set Delta the local coherence is the larger of

* ``gamma1``: an almost-sure bound on ``||B B^* P_Delta||_inf`` (largest
  absolute row sum of the columns in Delta), and
* ``gamma2``: ``sup_{||z||_inf = 1} max_i E |e_i^* B B^* P_Delta z|**2``.

``gamma1`` is exact for enumerable distributions. The supremum in
``gamma2`` is a maximisation of a convex quadratic over a product of disks
and is only bracketed: coordinate ascent gives a lower bound and
``lam * s * mu * upsilon`` an upper bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .levels import LevelPartition
from .profiles import upsilon as profile_upsilon
from .sampling import MatrixDistribution, RowDistribution

__all__ = [
    "CoherenceEstimate",
    "BoundReport",
    "gamma1_empirical",
    "row_energy",
    "gamma2_estimate",
    "analytic_coherence_bound",
    "minimal_lambda",
    "coherence_report",
    "log_factor_L",
    "measurement_bound_proxy",
    "bound_report",
]


@dataclass
class CoherenceEstimate:
    gamma1: float
    gamma2_lower: float
    analytic_upper: float
    delta: tuple
    draws_used: int
    exact: bool = True

    @property
    def gamma(self) -> float:
        return max(self.gamma1, self.gamma2_lower)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["delta"] = list(self.delta)
        out["gamma"] = self.gamma
        return out


@dataclass
class BoundReport:
    L: float
    m_proxy: float
    s: int
    lam: float
    mu: float
    upsilon: float
    N: int
    epsilon: float
    log_base: str = "e"

    def to_dict(self) -> dict:
        return asdict(self)


def _as_F(F):
    if isinstance(F, RowDistribution):
        return MatrixDistribution(None, F)
    return F


def _delta(delta, N):
    delta = np.unique(np.asarray(delta, dtype=int))
    if delta.size == 0:
        raise ValueError("the support set is empty")
    if delta[0] < 0 or delta[-1] >= N:
        raise ValueError("support index out of range")
    return delta


def _cross(B, delta):
    # (B B^*)[:, delta] for every draw -> (K, N, |delta|)
    return np.einsum("kim,kjm->kij", B, B[:, delta, :].conj())


def _draws(F, budget, rng):
    if budget is None:
        if not F.is_enumerable:
            raise ValueError("distribution has too many atoms; pass a draw budget")
        return F.atoms()
    B = F.sample(rng, budget)
    return np.full(budget, 1.0 / budget), B


def gamma1_empirical(F, delta, budget: int | None = None, rng=None) -> float:
    """Largest ``||B B^* P_Delta||_inf`` over all atoms, or over `budget` draws.

    With a budget the result is a lower bound on the almost-sure constant.
    """
    F = _as_F(F)
    delta = _delta(delta, F.N)
    _, B = _draws(F, budget, rng)
    return float(np.abs(_cross(B, delta)).sum(axis=2).max())


def _quadratic_forms(F, delta, budget=None, rng=None):
    w, B = _draws(F, budget, rng)
    G = _cross(B, delta)
    # Q_i[a, b] = E conj(G_ia) G_ib, so E|G_i . z|^2 = z^H Q_i z
    return np.einsum("k,kia,kib->iab", w, G.conj(), G)


def row_energy(F, delta, z) -> np.ndarray:
    """``E |e_i^* B B^* P_Delta z|**2`` for every i (exact expectation)."""
    F = _as_F(F)
    delta = _delta(delta, F.N)
    zd = np.asarray(z, dtype=complex)[delta]
    Q = _quadratic_forms(F, delta)
    return np.real(np.einsum("a,iab,b->i", zd.conj(), Q, zd))


def _ascent(Q, Z, max_sweeps=200, tol=1e-13):
    """Coordinate ascent of ``z^H Q_i z`` over unit-modulus z, batched over (i, start)."""
    n = Q.shape[1]
    value = np.real(np.einsum("ira,iab,irb->ir", Z.conj(), Q, Z))
    for _ in range(max_sweeps):
        for j in range(n):
            b = np.einsum("ib,irb->ir", Q[:, j, :], Z) - Q[:, j, j][:, None] * Z[:, :, j]
            mag = np.abs(b)
            # with b == 0 every phase ties; keep the current phase (or 1 if z_j == 0)
            keep = np.where(np.abs(Z[:, :, j]) > 0, Z[:, :, j] / np.maximum(np.abs(Z[:, :, j]), 1e-300), 1.0)
            Z[:, :, j] = np.where(mag > 0, b / np.maximum(mag, 1e-300), keep)
        new = np.real(np.einsum("ira,iab,irb->ir", Z.conj(), Q, Z))
        done = np.all(new - value <= tol * np.maximum(1.0, np.abs(new)))
        value = np.maximum(value, new)
        if done:
            break
    return value, Z


def gamma2_estimate(F, delta, z_budget: int = 8, seed=None, z0=None,
                    return_z: bool = False, budget: int | None = None):
    """Lower bound on the second local-coherence constant.

    The expectation is exact over the atoms of F. The supremum over
    ``||z||_inf = 1`` is approached by coordinate ascent from the principal
    eigenvector phases of each row's quadratic form, `z_budget` random
    phase vectors, and the optional warm start `z0` (length N; entries
    outside Delta are ignored, zeros are allowed). Ascent never decreases
    the objective, so a warm start from a subset's maximiser makes the
    estimate monotone under inclusion.

    With a draw `budget` the expectation is a Monte Carlo average over that
    many draws instead (needed for distributions with too many atoms).

    Returns
    -------
    value : float
    z : ndarray, only with ``return_z``
        Length-N maximiser (zeros outside Delta).
    """
    F = _as_F(F)
    delta = _delta(delta, F.N)
    rng = np.random.default_rng(seed)
    Q = _quadratic_forms(F, delta, budget, rng)
    N, n = Q.shape[0], delta.size
    starts = []
    _, vecs = np.linalg.eigh(Q)
    top = vecs[:, :, -1]
    starts.append(np.where(np.abs(top) > 0, top / np.maximum(np.abs(top), 1e-300), 1.0))
    for _ in range(z_budget):
        starts.append(np.broadcast_to(np.exp(2j * np.pi * rng.random(n)), (N, n)))
    if z0 is not None:
        starts.append(np.broadcast_to(np.asarray(z0, dtype=complex)[delta], (N, n)))
    Z = np.stack(starts, axis=1).astype(complex)
    value, Z = _ascent(Q, Z)
    i, r = np.unravel_index(np.argmax(value), value.shape)
    best = float(value[i, r])
    if not return_z:
        return best
    z = np.zeros(F.N, dtype=complex)
    z[delta] = Z[i, r]
    return best, z


def analytic_coherence_bound(s: int, lam: float, mu: float, upsilon: float) -> float:
    """Upper bound ``lam * s * mu * upsilon`` on both coherence constants."""
    return lam * s * mu * upsilon


def minimal_lambda(delta, partition: LevelPartition) -> float:
    """Smallest lambda for which `delta` is s-sparse and lambda-distributed.

    With ``s = |delta|`` and per-level caps ``floor(lam*s/D)`` this is
    ``D * max_d s_d / s`` (at least 1).
    """
    delta = np.asarray(delta, dtype=int)
    counts = np.bincount(partition.labels[delta], minlength=partition.D)
    return max(1.0, partition.D * counts.max() / delta.size)


def coherence_report(F: MatrixDistribution, partition: LevelPartition, delta,
                     lam: float | None = None, budget: int | None = None,
                     z_budget: int = 8, seed=None) -> CoherenceEstimate:
    """Both coherence constants for `delta` next to the analytic bound."""
    F = _as_F(F)
    delta = _delta(delta, F.N)
    if lam is None:
        lam = minimal_lambda(delta, partition)
    ups = profile_upsilon(F.profiles, partition)
    g1 = gamma1_empirical(F, delta, budget=budget, rng=seed)
    g2 = gamma2_estimate(F, delta, z_budget=z_budget, seed=seed, budget=budget)
    upper = analytic_coherence_bound(delta.size, lam, F.mu, ups)
    draws = budget if budget is not None else int(F.atoms()[0].size)
    return CoherenceEstimate(g1, g2, upper, tuple(int(j) for j in delta), draws,
                             exact=budget is None)


def log_factor_L(N: int, s: int, epsilon: float) -> float:
    """``log(N/eps) + log(s) * log(s/eps)`` with natural logarithms."""
    if N < 2 or s < 2 or not 0 < epsilon < 1:
        raise ValueError(f"need N >= 2, s >= 2, 0 < epsilon < 1 (got {N}, {s}, {epsilon})")
    return math.log(N / epsilon) + math.log(s) * math.log(s / epsilon)


def measurement_bound_proxy(s: int, lam: float, mu: float, upsilon: float, L: float) -> float:
    """``lam * s * mu * upsilon * L``; the universal constant is omitted."""
    values = (s, lam, mu, upsilon, L)
    if any(v <= 0 for v in values):
        raise ValueError("all inputs must be positive")
    return lam * s * mu * upsilon * L


def bound_report(N: int, s: int, epsilon: float, lam: float, mu: float,
                 upsilon: float) -> BoundReport:
    L = log_factor_L(N, s, epsilon)
    return BoundReport(L, measurement_bound_proxy(s, lam, mu, upsilon, L),
                       s, lam, mu, upsilon, N, epsilon)
