"""Basis pursuit with a noise ball, solved by a primal-dual splitting method.

The problem ``min ||z||_1  s.t.  ||A z - y||_2 <= eta`` is written as
``min_z g(z) + f(A z)`` with g the l1 norm and f the indicator of the
eta-ball around y, and solved with the Chambolle-Pock iteration. Each
iteration costs one application of A and one of its adjoint.

Convergence is certified by the duality gap. For a dual point v with
``||A^* v||_inf <= 1`` the value ``Re<v, y> - eta ||v||`` is a lower bound
on the optimum, so ``||z||_1`` minus that bound (with z feasible up to
`feasibility_tol`) bounds the suboptimality of z.

In the noiseless case the iterate is periodically polished: least squares
on its support, with the dual iterate corrected to satisfy the support
equations exactly. Once the support is right this closes the gap to
rounding level.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .levels import LevelPartition, level_caps

__all__ = [
    "SolverOptions",
    "RecoveryResult",
    "RecoveryError",
    "basis_pursuit",
    "l0_oracle",
    "recovery_error",
    "operator_norm",
]


@dataclass
class SolverOptions:
    """Solver settings. ``None`` tolerances default to ``1e-8 * max(1, ||y||)``."""

    eta: float = 0.0
    max_iterations: int = 20000
    primal_dual_gap_tol: float | None = None
    feasibility_tol: float | None = None
    check_every: int = 50
    polish: bool = True

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        for name in ("primal_dual_gap_tol", "feasibility_tol"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.max_iterations < 1 or self.check_every < 1:
            raise ValueError("iteration counts must be positive")

    def resolved(self, y_norm: float):
        scale = 1e-8 * max(1.0, y_norm)
        gap = self.primal_dual_gap_tol if self.primal_dual_gap_tol is not None else scale
        feas = self.feasibility_tol if self.feasibility_tol is not None else scale
        return gap, feas


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    iterations: int
    residual_norm: float
    objective: float
    converged: bool
    gap: float = np.inf
    polished: bool = False


@dataclass(frozen=True)
class RecoveryError:
    abs_l2: float
    rel_l2: float
    support_match: bool


def _dense(A):
    if isinstance(A, np.ndarray):
        return A
    return getattr(A, "A", None)


def _operators(A):
    M = _dense(A)
    if M is not None:
        M = np.asarray(M, dtype=complex)
        MH = np.ascontiguousarray(M.conj().T)
        return M, (lambda z: M @ z), (lambda r: MH @ r), M.shape
    return None, A.apply, A.adjoint, A.shape


def operator_norm(apply, adjoint, N: int, iterations: int = 20, tol: float = 1e-6) -> float:
    """Power-method estimate of the spectral norm from a fixed start vector."""
    v = np.random.default_rng(0).standard_normal(N) + 0j
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        w = adjoint(apply(v))
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        prev, est = est, np.sqrt(nrm)
        if abs(est - prev) <= tol * est:
            break
    return float(est)


def _soft(v, t):
    mag = np.abs(v)
    return v * np.maximum(0.0, 1.0 - t / np.maximum(mag, 1e-300))


def _dual_value(v, y, eta, Ahv):
    # scale v into the dual feasible set ||A^* v||_inf <= 1
    s = max(1.0, float(np.max(np.abs(Ahv))))
    v = v / s
    return float(np.real(np.vdot(v, y)) - eta * np.linalg.norm(v))


def _polish(M, y, z, v, feas_tol, rel_threshold=1e-6):
    """Least-squares refit on the support of z with a corrected certificate."""
    mag = np.abs(z)
    if mag.max() == 0:
        return None
    S = np.flatnonzero(mag > rel_threshold * mag.max())
    m = M.shape[0]
    if S.size > m:
        return None
    MS = M[:, S]
    zs, *_ = np.linalg.lstsq(MS, y, rcond=None)
    if (feas_tol is not None and np.linalg.norm(MS @ zs - y) > feas_tol) or np.any(zs == 0):
        return None
    sgn = zs / np.abs(zs)
    G = MS.conj().T @ MS
    try:
        w = v + MS @ np.linalg.solve(G, sgn - MS.conj().T @ v)
    except np.linalg.LinAlgError:
        return None
    corr = np.abs(M.conj().T @ w)
    corr[S] = 0.0
    if corr.max() > 1.0:
        return None
    x = np.zeros(M.shape[1], dtype=complex)
    x[S] = zs
    return x, float(np.abs(zs).sum() - np.real(np.vdot(w, y)))


def _whiten(M, y, feas_tol):
    """Orthonormal row basis with the same solution set ``{z : M z = y}``.

    Returns ``(Q, yq, smax)`` with ``Q = V_r^*`` from the thin SVD, or None when y
    has a component outside the range of M (no exact solution exists).
    """
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    # sqrt(eps) cutoff: dividing by smaller singular values amplifies rounding in y
    r = int(np.sum(s > 1e-8 * s[0])) if s.size and s[0] > 0 else 0
    if r == 0:
        return None
    coef = U[:, :r].conj().T @ y
    if np.linalg.norm(y - U[:, :r] @ coef) > feas_tol:
        return None
    return np.ascontiguousarray(Vh[:r]), coef / s[:r], float(s[0])


def _merit(z, resid, gap, eta):
    return max(resid - eta, 0.0) + abs(gap)


def basis_pursuit(A, y, opts: SolverOptions | None = None, **kwargs) -> RecoveryResult:
    """Solve ``min ||z||_1`` subject to ``||A z - y||_2 <= eta``.

    Parameters
    ----------
    A : ndarray, MeasurementEnsemble or operator
        Anything with ``apply``/``adjoint``/``shape`` works. Dense inputs
        additionally get row whitening and support polishing when
        ``eta == 0``.
    y : array
        Measurements, length m.
    opts : SolverOptions, optional
        Keyword arguments not given through `opts` are forwarded to
        :class:`SolverOptions` (e.g. ``eta=0.1``).

    Returns
    -------
    RecoveryResult
        ``converged`` is False when the gap or feasibility tolerance was
        not met within ``max_iterations``; the last iterate is returned.

    Notes
    -----
    The iteration restarts from the current or epoch-averaged point once
    its optimality measure has halved since the previous restart, and
    rebalances the primal/dual step ratio from the distances travelled
    between restarts.
    """
    if opts is None:
        opts = SolverOptions(**kwargs)
    elif kwargs:
        raise TypeError("pass either opts or keyword options, not both")
    M, apply, adjoint, (m, N) = _operators(A)
    y = np.asarray(y, dtype=complex).ravel()
    if y.shape[0] != m:
        raise ValueError(f"y has length {y.shape[0]}, expected {m}")
    eta = float(opts.eta)
    y_norm = float(np.linalg.norm(y))
    gap_tol, feas_tol = opts.resolved(y_norm)

    z = np.zeros(N, dtype=complex)
    if y_norm <= eta:
        return RecoveryResult(z, 0, y_norm, 0.0, True, 0.0)

    # original operators, used for the reported residual
    apply0 = apply
    yw = y
    whitened = False
    if eta == 0.0 and M is not None:
        white = _whiten(M, y, feas_tol)
        if white is not None:
            # iterate on the whitened rows; feasibility is still judged on A
            M, yw, _ = white
            whitened = True
            MH = np.ascontiguousarray(M.conj().T)
            apply, adjoint = (lambda z: M @ z), (lambda r: MH @ r)
    yw_norm = float(np.linalg.norm(yw))

    L = operator_norm(apply, adjoint, N)
    # primal/dual step ratio starts at the scale of y so iterates are scale-equivariant
    omega = yw_norm / np.sqrt(N)

    def steps(omega):
        return 0.95 * omega / L, 0.95 / (omega * L)

    tau, sigma = steps(omega)
    u = np.zeros(yw.shape[0], dtype=complex)
    z_bar = z.copy()
    z_anchor, u_anchor = z.copy(), u.copy()
    z_sum, u_sum, n_sum = np.zeros_like(z), np.zeros_like(u), 0
    last_merit = np.inf
    gap = np.inf
    k = 0

    def measure(z, u):
        v = -u
        resid = float(np.linalg.norm(apply(z) - yw))
        gap = float(np.abs(z).sum()) - _dual_value(v, yw, eta, adjoint(v))
        return resid, gap

    for k in range(1, opts.max_iterations + 1):
        # dual step: prox of sigma * f^*, via Moreau with the eta-ball projection
        t = u + sigma * apply(z_bar)
        w = t / sigma - yw
        nw = np.linalg.norm(w)
        if nw > eta:
            w *= eta / nw
        u = t - sigma * (w + yw)
        z_new = _soft(z - tau * adjoint(u), tau)
        z_bar = 2.0 * z_new - z
        z = z_new
        z_sum += z
        u_sum += u
        n_sum += 1
        if k % opts.check_every and k != opts.max_iterations:
            continue
        resid, gap = measure(z, u)
        resid0 = float(np.linalg.norm(apply0(z) - y)) if whitened else resid
        if resid0 <= eta + feas_tol and gap <= gap_tol:
            break
        if opts.polish and eta == 0.0 and M is not None:
            polished = _polish(M, yw, z, -u, None if whitened else feas_tol)
            if polished is not None and polished[1] <= gap_tol:
                x, pgap = polished
                r = float(np.linalg.norm(apply0(x) - y))
                if r <= feas_tol:
                    return RecoveryResult(x, k, r, float(np.abs(x).sum()), True, pgap, True)
        current = _merit(z, resid, gap, eta)
        z_avg, u_avg = z_sum / n_sum, u_sum / n_sum
        averaged = _merit(z_avg, *measure(z_avg, u_avg), eta)
        if averaged < current:
            current, z_c, u_c = averaged, z_avg, u_avg
        else:
            z_c, u_c = z, u
        if current <= 0.5 * last_merit:
            dz = np.linalg.norm(z_c - z_anchor)
            du = np.linalg.norm(u_c - u_anchor)
            if dz > 1e-14 and du > 1e-14:
                omega = float(np.sqrt(omega * dz / du))
                tau, sigma = steps(omega)
            z, u = z_c.copy(), u_c.copy()
            z_bar = z.copy()
            z_anchor, u_anchor = z.copy(), u.copy()
            z_sum[:] = 0
            u_sum[:] = 0
            n_sum = 0
            last_merit = current
    resid0 = float(np.linalg.norm(apply0(z) - y))
    _, gap = measure(z, u)
    converged = resid0 <= eta + feas_tol and gap <= gap_tol
    return RecoveryResult(z, k, resid0, float(np.abs(z).sum()), converged, gap)


def l0_oracle(A, y, s_max: int, partition: LevelPartition | None = None,
              lam: float = 1.0, tol: float | None = None) -> np.ndarray:
    """Sparsest least-squares-consistent vector by exhaustive support search.

    Supports of size 0, 1, ..., `s_max` are tried in turn (restricted to the
    per-level caps of the s_max-sparse, lam-distributed model when a
    partition is given). The first size admitting a fit with residual at
    most ``tol`` wins; among those the smallest residual is returned. If no
    support fits, the best size-`s_max` fit is returned.
    """
    M = _dense(A)
    if M is None:
        raise TypeError("l0_oracle needs a dense matrix")
    M = np.asarray(M, dtype=complex)
    m, N = M.shape
    if N > 16 or s_max > 3:
        raise ValueError(f"instance too large for exhaustive search (N={N}, s_max={s_max})")
    y = np.asarray(y, dtype=complex).ravel()
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.linalg.norm(y)))
    caps = labels = None
    if partition is not None:
        caps = level_caps(partition, s_max, lam)
        labels = partition.labels
    best = (np.inf, np.zeros(N, dtype=complex))
    if np.linalg.norm(y) <= tol:
        return best[1]
    for k in range(1, s_max + 1):
        best = (np.inf, best[1])
        for S in itertools.combinations(range(N), k):
            if caps is not None and np.any(np.bincount(labels[list(S)], minlength=caps.size) > caps):
                continue
            MS = M[:, S]
            zs, *_ = np.linalg.lstsq(MS, y, rcond=None)
            r = float(np.linalg.norm(MS @ zs - y))
            if r < best[0]:
                x = np.zeros(N, dtype=complex)
                x[list(S)] = zs
                best = (r, x)
        if best[0] <= tol:
            return best[1]
    return best[1]


def recovery_error(x_hat, x, feasibility_tol: float = 1e-8) -> RecoveryError:
    """Absolute/relative l2 error and support agreement.

    Supports are compared after discarding entries below
    ``10 * feasibility_tol * ||x_hat||_inf``.
    """
    x_hat = np.asarray(x_hat)
    x = np.asarray(x)
    if x_hat.shape != x.shape:
        raise ValueError("vectors differ in shape")
    err = float(np.linalg.norm(x_hat - x))
    ref = float(np.linalg.norm(x))
    rel = err / ref if ref > 0 else (0.0 if err == 0 else np.inf)
    cut = 10 * feasibility_tol * (float(np.max(np.abs(x_hat))) if x_hat.size else 0.0)
    match = bool(np.array_equal(np.abs(x_hat) > cut, np.abs(x) > cut))
    return RecoveryError(err, rel, match)
