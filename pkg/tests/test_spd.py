import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.linalg import logm, sqrtm

from mfm_wishart.errors import (DimMismatch, InvalidDof, LengthMismatch, NotPositiveDefinite,
                                NotSymmetric, ZeroDiagonal)
from mfm_wishart.spd import (SpdMatrix, cholesky, duplication_matrix, log_det,
                             riemannian_distance, sample_inverse_wishart,
                             sample_inverse_wishart_array, sample_wishart,
                             sample_wishart_array, solve_spd, standardize_to_correlation,
                             trace_product, vech, vech_dim, vech_inverse)


def random_spd(rng, p, jitter=0.5):
    a = rng.standard_normal((p, p))
    return a @ a.T + jitter * np.eye(p)


# -- construction / factorization -------------------------------------------------------

def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky([[4, 2], [2, 3]]), [[2, 0], [1, math.sqrt(2)]])
    with pytest.raises(NotPositiveDefinite) as err:
        cholesky([[1, 2], [2, 1]])
    assert err.value.pivot == 1


def test_not_symmetric():
    with pytest.raises(NotSymmetric) as err:
        SpdMatrix([[1.0, 0.5], [0.4, 1.0]])
    assert err.value.asymmetry == pytest.approx(0.1)
    # rounding-level asymmetry is accepted and removed
    m = SpdMatrix([[1.0, 0.5], [0.5 + 1e-12, 1.0]])
    assert m.entries[0, 1] == m.entries[1, 0]


def test_spd_invariants():
    rng = np.random.default_rng(1)
    for p in (1, 2, 5, 12):
        m = SpdMatrix(random_spd(rng, p))
        e = m.entries
        assert np.array_equal(e, e.T)
        assert np.all(np.diag(m.chol) > 0)
        np.testing.assert_allclose(m.chol @ m.chol.T, e, rtol=1e-10, atol=1e-12 * np.abs(e).max())
        assert np.isfinite(m.log_det())
        with pytest.raises(ValueError):
            m.entries[0, 0] = 5.0


def test_log_det_examples():
    assert log_det(np.eye(4)) == 0.0
    assert log_det(np.diag([2.0, 8.0])) == pytest.approx(math.log(16))
    assert log_det([[4, 2], [2, 3]]) == pytest.approx(math.log(8))


def test_trace_product():
    assert trace_product(np.eye(3), np.eye(3)) == 3
    assert trace_product([[1, 1], [1, 2]], [[2, 0], [0, 1]]) == 4
    rng = np.random.default_rng(2)
    a, b = random_spd(rng, 4), random_spd(rng, 4)
    assert trace_product(a, b) == pytest.approx(np.trace(a @ b))
    assert trace_product(a, b) == pytest.approx(trace_product(b, a))
    with pytest.raises(DimMismatch):
        trace_product(np.eye(2), np.eye(3))


def test_solve_spd():
    b = np.arange(6.0).reshape(3, 2)
    np.testing.assert_allclose(solve_spd(np.eye(3), b), b)
    np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), np.eye(2)), np.diag([0.5, 0.25]))
    rng = np.random.default_rng(3)
    a, rhs = random_spd(rng, 6), rng.standard_normal((6, 3))
    x = solve_spd(a, rhs)
    assert np.linalg.norm(a @ x - rhs) / np.linalg.norm(rhs) < 1e-9


# -- vech ---------------------------------------------------------------------------------------

def test_vech_examples():
    np.testing.assert_array_equal(vech(np.eye(2)), [1, 0, 1])
    np.testing.assert_array_equal(vech([[1, 2], [2, 3]]), [1, 2, 3])
    np.testing.assert_array_equal(vech([[1, 2, 4], [2, 3, 5], [4, 5, 6]]), [1, 2, 4, 3, 5, 6])
    with pytest.raises(LengthMismatch):
        vech_inverse([1.0, 2.0])
    with pytest.raises(LengthMismatch):
        vech_dim(0)


@given(p=st.integers(1, 12), seed=st.integers(0, 2 ** 32 - 1))
def test_vech_round_trip(p, seed):
    a = np.random.default_rng(seed).standard_normal((p, p))
    a = a + a.T
    assert np.array_equal(vech_inverse(vech(a)), a)


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_duplication_matrix(p):
    rng = np.random.default_rng(p)
    a = random_spd(rng, p)
    np.testing.assert_array_equal(duplication_matrix(p) @ vech(a), a.reshape(-1, order="F"))


# -- distances ------------------------------------------------------------------------------------

def test_distance_examples():
    a = SpdMatrix([[2.0, 0.3], [0.3, 1.0]])
    assert riemannian_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    assert riemannian_distance(np.eye(4), math.e * np.eye(4)) == pytest.approx(2.0, rel=1e-12)
    assert riemannian_distance(np.eye(4), math.e * np.eye(4), "log-euclidean") == pytest.approx(2.0)
    with pytest.raises(DimMismatch):
        riemannian_distance(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        riemannian_distance(np.eye(2), np.eye(2), "bogus")


def test_affine_distance_matches_matrix_log_route():
    """Generalized eigenvalues vs ||logm(A^-1/2 B A^-1/2)||_F."""
    rng = np.random.default_rng(4)
    for p in (2, 3, 6):
        for _ in range(10):
            a, b = random_spd(rng, p), random_spd(rng, p)
            r = np.linalg.inv(sqrtm(a))
            ref = np.linalg.norm(logm(r @ b @ r))
            assert riemannian_distance(a, b) == pytest.approx(ref, rel=1e-7)


@pytest.mark.parametrize("p", [2, 3, 6])
def test_distance_properties(p):
    rng = np.random.default_rng(10 + p)
    for _ in range(100):
        a, b = random_spd(rng, p), random_spd(rng, p)
        m = rng.standard_normal((p, p)) + 2 * np.eye(p)
        d = riemannian_distance(a, b)
        assert d >= 0
        assert d == pytest.approx(riemannian_distance(b, a), rel=1e-9)
        assert riemannian_distance(a, a) < 1e-10
        assert riemannian_distance(m @ a @ m.T, m @ b @ m.T) == pytest.approx(d, rel=1e-8, abs=1e-8)


# -- sampling --------------------------------------------------------------------------------------

def test_wishart_dof_checks():
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidDof):
        sample_wishart(np.eye(3), 1.5, rng)
    with pytest.raises(InvalidDof):
        sample_inverse_wishart(np.eye(3), 2.0, rng)


def test_wishart_determinism():
    a = sample_wishart(np.eye(3), 5.5, np.random.default_rng(9))
    b = sample_wishart(np.eye(3), 5.5, np.random.default_rng(9))
    assert np.array_equal(a.entries, b.entries)
    c = sample_inverse_wishart(np.eye(3), 5.5, np.random.default_rng(9))
    d = sample_inverse_wishart(np.eye(3), 5.5, np.random.default_rng(9))
    assert np.array_equal(c.entries, d.entries)


def _z_scores(draws, target):
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    return np.abs(mean - target) / se


def test_wishart_integer_nu_matches_outer_product_sum():
    """Bartlett draws vs sums of nu Gaussian outer products, p=2, nu=5."""
    rng = np.random.default_rng(11)
    sigma = np.array([[1.0, 0.4], [0.4, 2.0]])
    n, nu = 100_000, 5
    bart = sample_wishart_array(sigma, nu, rng, n)
    x = rng.multivariate_normal(np.zeros(2), sigma, size=(n, nu))
    outer = np.einsum("nki,nkj->nij", x, x)
    for f in (lambda w: w, lambda w: w ** 2):
        a, b = f(bart).reshape(n, -1), f(outer).reshape(n, -1)
        se = np.sqrt(a.var(axis=0, ddof=1) / n + b.var(axis=0, ddof=1) / n)
        assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 5 * se)


def test_inverse_wishart_mean():
    rng = np.random.default_rng(12)
    draws = sample_inverse_wishart_array(4 * np.eye(2), 7, rng, 100_000)
    assert np.all(_z_scores(draws.reshape(-1, 4), np.eye(2).ravel()) < 4)


def test_inverse_wishart_duality_ks():
    """The inverse of an IW(psi, kappa) draw is W(psi^-1, kappa): compare p=1 marginals."""
    rng = np.random.default_rng(13)
    psi, kappa = 3.0, 6.5
    iw = sample_inverse_wishart_array([[psi]], kappa, rng, 5000)[:, 0, 0]
    # W_1(1/psi, kappa) is Gamma(shape kappa/2, scale 2/psi)
    res = stats.kstest(1.0 / iw, stats.gamma(a=kappa / 2, scale=2 / psi).cdf)
    assert res.pvalue >= 0.01


def test_wishart_outputs_spd():
    rng = np.random.default_rng(14)
    for w in sample_wishart_array(np.eye(4), 4.2, rng, 200):
        SpdMatrix(w)


# -- correlation ----------------------------------------------------------------------------------

def test_standardize_examples():
    assert np.array_equal(standardize_to_correlation(np.eye(3)).entries, np.eye(3))
    r = standardize_to_correlation([[4, 2], [2, 9]])
    np.testing.assert_allclose(r.entries, [[1, 1 / 3], [1 / 3, 1]])
    with pytest.raises(NotPositiveDefinite):
        standardize_to_correlation([[4, 2], [2, 1]])
    with pytest.raises(ZeroDiagonal):
        standardize_to_correlation([[0, 0], [0, 1]])


@settings(max_examples=30)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.integers(1, 8))
def test_standardize_properties(seed, p):
    r = standardize_to_correlation(random_spd(np.random.default_rng(seed), p)).entries
    assert np.all(np.diag(r) == 1.0)
    assert np.all(np.abs(r) <= 1.0)
