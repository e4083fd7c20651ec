import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msense.analysis import (
    analytic_coherence_bound,
    bound_report,
    coherence_report,
    gamma1_empirical,
    gamma2_estimate,
    log_factor_L,
    measurement_bound_proxy,
    minimal_lambda,
    row_energy,
)
from msense.levels import LevelPartition, sample_sparse_distributed
from msense.profiles import (
    banded_profiles,
    dft_isometry,
    piecewise_constant_profiles,
    random_isometry,
    upsilon,
)
from msense.sampling import RowDistribution, matrix_distribution


class SingleAtom:
    """Degenerate distribution whose only draw is the identity."""

    def __init__(self, N):
        self.N = N
        self.is_enumerable = True

    def atoms(self):
        return np.ones(1), np.eye(self.N, dtype=complex)[None]


def test_gamma1_singleton_fourier():
    F = RowDistribution("fourier", 8)
    for j in range(8):
        assert gamma1_empirical(F, [j]) == pytest.approx(1.0, abs=1e-12)


def test_gamma1_identity_atom():
    assert gamma1_empirical(SingleAtom(5), range(5)) == 1.0


def test_gamma1_empty_support():
    with pytest.raises(ValueError):
        gamma1_empirical(RowDistribution("fourier", 4), [])
    with pytest.raises(ValueError):
        gamma1_empirical(RowDistribution("fourier", 4), [4])


def test_gamma1_budget_is_a_lower_bound():
    prof, part = banded_profiles(3, 24, mode="distinct")
    F = matrix_distribution(prof)
    delta = [0, 9, 17]
    exact = gamma1_empirical(F, delta)
    sampled = gamma1_empirical(F, delta, budget=20, rng=1)
    assert sampled <= exact + 1e-12


def test_gamma2_singleton_closed_form():
    # |e_i^* B B^* e_j|^2 = 1 for every atom, so the sup over |z_j| = 1 is exactly 1
    F = RowDistribution("fourier", 4)
    for j in range(4):
        assert gamma2_estimate(F, [j], seed=0) == pytest.approx(1.0, abs=1e-10)


def test_basis_direction_gives_diagonal():
    prof, _ = banded_profiles(3, 12, mode="identical")
    F = matrix_distribution(prof)
    w, B = F.atoms()
    G = np.einsum("kim,kjm->kij", B, B.conj())
    delta = [1, 5, 10]
    for j in delta:
        z = np.zeros(12)
        z[j] = 1.0
        expected = np.einsum("k,ki->i", w, np.abs(G[:, :, j]) ** 2)
        assert np.allclose(row_energy(F, delta, z), expected, atol=1e-12)


def test_gamma2_brute_force_on_tiny_support():
    # for |Delta| = 2 only the relative phase matters; scan it finely
    prof, _ = banded_profiles(3, 8, mode="identical", strict=False)
    F = matrix_distribution(prof)
    delta = [2, 5]
    best = 0.0
    for phi in np.linspace(0, 2 * np.pi, 20001):
        z = np.zeros(8, dtype=complex)
        z[2], z[5] = 1.0, np.exp(1j * phi)
        best = max(best, row_energy(F, delta, z).max())
    est = gamma2_estimate(F, delta, seed=0)
    assert est <= best + 1e-9
    assert est == pytest.approx(best, rel=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32))
def test_gamma_monotone_under_inclusion(seed):
    rng = np.random.default_rng(seed)
    prof, part = banded_profiles(4, 24, mode=rng.choice(["distinct", "identical"]))
    F = matrix_distribution(prof)
    small = rng.choice(24, 3, replace=False)
    large = np.union1d(small, rng.choice(24, 3, replace=False))
    assert gamma1_empirical(F, small) <= gamma1_empirical(F, large) + 1e-12
    g_small, z = gamma2_estimate(F, small, seed=seed, return_z=True)
    g_large = gamma2_estimate(F, large, seed=seed, z0=z)
    assert g_small <= g_large + 1e-12


def test_minimal_lambda():
    part = LevelPartition.contiguous(12, 3)
    assert minimal_lambda([0, 4, 8], part) == 1.0
    assert minimal_lambda([0, 1, 8], part) == pytest.approx(2.0)


@pytest.mark.parametrize("mode", ["distinct", "identical"])
def test_sandwich_piecewise_and_banded(mode):
    N, C = 32, 4
    part = LevelPartition.contiguous(N, 4)
    families = [
        (piecewise_constant_profiles(random_isometry(C, 4, 3), part, mode), part),
        banded_profiles(C, 33, mode=mode),
    ]
    rng = np.random.default_rng(5)
    for prof, p in families:
        F = matrix_distribution(prof)
        for _ in range(5):
            s = int(rng.integers(2, 6))
            lam = float(p.D) if s < p.D else max(1.0, p.D * np.ceil(s / p.D) / s)
            delta = np.flatnonzero(sample_sparse_distributed(p, s, lam, rng=rng))
            est = coherence_report(F, p, delta, lam=lam, seed=1)
            bound = analytic_coherence_bound(s, lam, 1.0, upsilon(prof, p))
            assert est.analytic_upper == pytest.approx(bound)
            assert est.gamma1 <= bound * (1 + 1e-12)
            assert est.gamma2_lower <= bound * (1 + 1e-12)
            assert est.gamma == max(est.gamma1, est.gamma2_lower)
            assert est.exact and est.draws_used == F.atoms()[0].size


def test_report_serialises():
    prof, part = banded_profiles(3, 12, mode="identical")
    est = coherence_report(matrix_distribution(prof), part, [0, 7], seed=0)
    doc = est.to_dict()
    assert doc["delta"] == [0, 7] and doc["gamma"] == est.gamma


def test_monte_carlo_coherence_is_flagged():
    prof, part = banded_profiles(3, 40, mode="distinct")
    F = matrix_distribution(prof, kind="random-sign")
    with pytest.raises(ValueError):
        gamma1_empirical(F, [1, 2])
    est = coherence_report(F, part, [1, 2], budget=200, seed=0)
    assert not est.exact and est.draws_used == 200
    assert est.gamma1 > 0 and est.gamma2_lower > 0


# --- log factor and proxy ----------------------------------------------------

def test_log_factor_examples():
    assert log_factor_L(1024, 16, 0.05) == pytest.approx(25.92, abs=5e-3)
    assert log_factor_L(2, 2, 0.5) == pytest.approx(np.log(4) + np.log(2) * np.log(4))
    assert log_factor_L(2, 2, 0.5) == pytest.approx(2.347, abs=5e-4)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 10**7), st.integers(2, 10**4), st.floats(1e-9, 0.999))
def test_log_factor_high_precision(N, s, eps):
    mpmath.mp.dps = 40
    ref = mpmath.log(mpmath.mpf(N) / eps) + mpmath.log(s) * mpmath.log(mpmath.mpf(s) / eps)
    assert abs(log_factor_L(N, s, eps) - float(ref)) <= 1e-12 * max(1.0, float(ref))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10**5), st.integers(2, 500), st.floats(1e-6, 0.5), st.floats(1.01, 1.9))
def test_log_factor_decreases_in_epsilon(N, s, eps, factor):
    assert log_factor_L(N, s, eps) > log_factor_L(N, s, eps * factor)


def test_log_factor_domain():
    for args in [(1, 4, 0.1), (8, 1, 0.1), (8, 4, 0.0), (8, 4, 1.0)]:
        with pytest.raises(ValueError):
            log_factor_L(*args)


def test_proxy_linearity_and_domain():
    L = log_factor_L(256, 8, 0.01)
    full = measurement_bound_proxy(8, 1.0, 1.0, 2.0, L)
    assert measurement_bound_proxy(8, 1.0, 1.0, 1.0, L) == pytest.approx(full / 2)
    with pytest.raises(ValueError):
        measurement_bound_proxy(8, 1.0, 1.0, 0.0, L)


def test_proxy_piecewise_identical_independent_of_C():
    values = []
    for C in (1, 2, 4, 8):
        part = LevelPartition.contiguous(64, C)
        prof = piecewise_constant_profiles(dft_isometry(C, C), part, "identical")
        values.append(bound_report(64, 8, 0.01, 1.0, 1.0, upsilon(prof, part)).m_proxy)
    assert np.allclose(values, values[0], rtol=1e-12)


def test_proxy_banded_at_most_twice_single_sensor():
    L = log_factor_L(840, 10, 0.01)
    for C in range(2, 9):
        for mode in ("distinct", "identical"):
            prof, part = banded_profiles(C, 840, mode=mode)
            proxy = measurement_bound_proxy(10, 1.0, 1.0, upsilon(prof, part), L)
            assert proxy <= 2 * 10 * L * (1 + 1e-12)


def test_bound_report_fields():
    rep = bound_report(128, 8, 0.05, 1.5, 1.0, 1.25)
    doc = rep.to_dict()
    assert doc["log_base"] == "e" and doc["N"] == 128
    assert rep.m_proxy == pytest.approx(1.5 * 8 * 1.25 * rep.L)
