import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfm_wishart.errors import DomainError, IndexOutOfRange, MissingScaleConfig, TooShortSeries
from mfm_wishart.simulation import (MixtureSpec, Var1Spec, balanced_sizes,
                                    choose_T_for_target_nu, default_nu, effective_nu,
                                    generate_large_setting, generate_var1_dataset,
                                    generate_wishart_mixture, load_scales, proportion_sizes,
                                    sample_cov_cov_oracle, simulate_var1)
from mfm_wishart.spd import SpdMatrix


def test_cluster_sizes():
    assert balanced_sizes(50, 3) == (17, 17, 16)
    assert proportion_sizes(50, (0.2, 0.4, 0.4)) == (10, 20, 20)
    assert proportion_sizes(50, (0.1, 0.1, 0.2, 0.3, 0.3)) == (5, 5, 10, 15, 15)
    with pytest.raises(DomainError):
        balanced_sizes(2, 3)
    with pytest.raises(DomainError):
        proportion_sizes(10, (0.5, 0.6))


@given(n=st.integers(1, 500), k=st.integers(1, 10))
def test_balanced_sizes_properties(n, k):
    if n < k:
        return
    s = balanced_sizes(n, k)
    assert sum(s) == n and max(s) - min(s) <= 1 and list(s) == sorted(s, reverse=True)


@given(n=st.integers(1, 500), w=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8))
def test_proportion_sizes_sum(n, w):
    props = np.array(w) / np.sum(w)
    s = proportion_sizes(n, props)
    assert sum(s) == n
    assert np.all(np.abs(np.array(s) - n * props) < 1.0 + 1e-9)


def test_mixture_generation():
    rng = np.random.default_rng(0)
    spec = MixtureSpec(load_scales("small", 3), default_nu(3), 50)
    data, labels = generate_wishart_mixture(spec, rng)
    assert data.shape == (50, 3, 3)
    assert np.bincount(labels).tolist() == [17, 17, 16]
    for w in data:
        SpdMatrix(w)
    d2, l2 = generate_wishart_mixture(spec, np.random.default_rng(0))
    assert np.array_equal(data, d2) and np.array_equal(labels, l2)
    spec5 = MixtureSpec(load_scales("medium", 5), default_nu(5), 50,
                        (0.1, 0.1, 0.2, 0.3, 0.3))
    _, labels = generate_wishart_mixture(spec5, rng)
    assert np.bincount(labels).tolist() == [5, 5, 10, 15, 15]


def test_bundled_scales():
    for setting, p in (("small", 3), ("medium", 6)):
        for k0 in (3, 5):
            scales = load_scales(setting, k0)
            assert len(scales) == k0 and all(s.dim == p for s in scales)
    large = load_scales("large")
    assert len(large) == 2 and all(s.dim == 12 for s in large)
    with pytest.raises(MissingScaleConfig):
        load_scales("medium", 4)


def test_large_setting():
    rng = np.random.default_rng(1)
    data, labels, scales = generate_large_setting(50, rng)
    assert data.shape == (50, 12, 12)
    assert np.bincount(labels).tolist() == [17, 17, 16]
    np.testing.assert_allclose(np.diag(scales[2].entries), 1.0)
    _, _, again = generate_large_setting(50, rng)
    assert not np.array_equal(scales[2].entries, again[2].entries)
    assert scales[0] == again[0]


def test_effective_nu():
    assert effective_nu(17, 0.0) == 17.0
    assert effective_nu(16, 0.5) == pytest.approx(9.93, abs=0.005)
    assert effective_nu(43, 0.8) == pytest.approx(9.94, abs=0.005)
    with pytest.raises(DomainError):
        effective_nu(10, 1.0)
    with pytest.raises(DomainError):
        effective_nu(0, 0.5)


@given(T=st.integers(1, 300), a=st.floats(0.0, 0.95), b=st.floats(0.0, 0.95))
def test_effective_nu_bounds_and_monotone_in_phi(T, a, b):
    lo, hi = sorted((a, b))
    v_lo, v_hi = effective_nu(T, lo), effective_nu(T, hi)
    assert 0 < v_hi <= v_lo + 1e-12 <= T + 1e-12
    assert effective_nu(T, -hi) == pytest.approx(v_hi)


def test_choose_T():
    assert choose_T_for_target_nu(10, 0.5) == 16
    assert choose_T_for_target_nu(10, 0.8) == 43
    for nu0 in (1, 4, 10, 25):
        assert choose_T_for_target_nu(nu0, 0.0) == nu0
    with pytest.raises(DomainError):
        choose_T_for_target_nu(0.5, 0.3)


def test_cov_cov_oracle():
    assert sample_cov_cov_oracle(np.eye(2), 0.0, 10, (0, 0, 0, 0)) == pytest.approx(0.2)
    with pytest.raises(IndexOutOfRange):
        sample_cov_cov_oracle(np.eye(2), 0.0, 10, (0, 0, 2, 0))


@pytest.mark.parametrize("phi", [0.0, 0.5, 0.8])
def test_cov_cov_oracle_matches_monte_carlo(phi):
    rng = np.random.default_rng(2)
    sigma = np.array([[1.0, 0.4], [0.4, 2.0]])
    spec = Var1Spec(phi, sigma, 12, 10.0)
    x = simulate_var1(spec, 40_000, rng)
    s = np.einsum("mti,mtj->mij", x, x) / spec.T
    for idx in ((0, 0, 0, 0), (0, 1, 0, 1), (0, 0, 1, 1), (0, 1, 1, 1)):
        i, j, r, q = idx
        prod = (s[:, i, j] - s[:, i, j].mean()) * (s[:, r, q] - s[:, r, q].mean())
        se = prod.std(ddof=1) / np.sqrt(prod.size)
        ref = sample_cov_cov_oracle(sigma, phi, spec.T, idx)
        assert abs(prod.mean() - ref) < 4 * se


@pytest.mark.parametrize("phi", [0.0, 0.5, 0.8])
def test_var1_scatter_unbiased(phi):
    rng = np.random.default_rng(3)
    sigma = np.array([[1.0, 0.3, 0.0], [0.3, 1.5, -0.2], [0.0, -0.2, 0.8]])
    nu0 = 10.0
    T = choose_T_for_target_nu(nu0, phi)
    data, labels = generate_var1_dataset([Var1Spec(phi, sigma, T, nu0)], [10_000], rng)
    assert np.all(labels == 0)
    flat = data.reshape(len(data), -1)
    se = flat.std(axis=0, ddof=1) / np.sqrt(len(data))
    assert np.all(np.abs(flat.mean(axis=0) - nu0 * sigma.ravel()) < 4 * se + 1e-12)


def test_var1_dataset_checks():
    rng = np.random.default_rng(4)
    spec = Var1Spec(0.5, np.eye(6), 4, 10.0)
    with pytest.raises(TooShortSeries):
        generate_var1_dataset([spec], [3], rng)
    with pytest.raises(DomainError):
        Var1Spec(1.2, np.eye(2), 10, 10.0)
    a = generate_var1_dataset([Var1Spec(0.5, np.eye(2), 16, 10.0)], [5], np.random.default_rng(9))
    b = generate_var1_dataset([Var1Spec(0.5, np.eye(2), 16, 10.0)], [5], np.random.default_rng(9))
    assert np.array_equal(a[0], b[0])
