import numpy as np
import pytest
from scipy.stats import spearmanr

from cqcim.baselines import (PqCodebook, pca_fit, pca_project, pca_reconstruct,
                             pq_decode, pq_encode, pq_fit, pq_score,
                             vanilla_truncate)
from cqcim.numkit import make_rng


def jacobi_eigh(a, sweeps=100, tol=1e-12):
    """Independent cyclic-Jacobi eigendecomposition oracle for symmetric
    matrices; returns (eigenvalues desc, eigenvectors as columns)."""
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t**2 + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    order = np.argsort(np.diag(a))[::-1]
    return np.diag(a)[order], v[:, order]


# ---------------------------------------------------------------- pca

def test_pca_diagonal_line():
    rng = make_rng(0)
    t = rng.standard_normal(200)
    data = np.stack([t, t], axis=1) + 0.01 * rng.standard_normal((200, 2))
    model = pca_fit(data, 1)
    np.testing.assert_allclose(model.components[:, 0], [1 / np.sqrt(2)] * 2, atol=0.01)


def test_pca_full_rank_reconstruction():
    x = make_rng(1).standard_normal((50, 8))
    model = pca_fit(x, 8)
    recon = pca_reconstruct(model, pca_project(model, x))
    np.testing.assert_allclose(recon, x, atol=1e-8)


def test_pca_orthonormal_and_sorted():
    x = make_rng(2).standard_normal((60, 12))
    model = pca_fit(x, 5)
    np.testing.assert_allclose(model.components.T @ model.components, np.eye(5),
                               atol=1e-8)
    assert np.all(np.diff(model.eigenvalues) <= 1e-12)
    assert np.all(model.eigenvalues >= 0)


def test_pca_matches_jacobi_oracle():
    rng = make_rng(3)
    x = rng.standard_normal((100, 10))
    model = pca_fit(x, 3)
    cov = np.cov(x - x.mean(axis=0), rowvar=False)
    evals, _ = jacobi_eigh(cov)
    np.testing.assert_allclose(model.eigenvalues, evals[:3], atol=1e-6)


def test_pca_projection_of_mean_is_zero():
    x = make_rng(4).standard_normal((30, 6))
    model = pca_fit(x, 4)
    proj = pca_project(model, x.mean(axis=0, keepdims=True))
    np.testing.assert_allclose(proj, 0.0, atol=1e-10)


def test_pca_component_direction_projects_to_unit():
    x = make_rng(5).standard_normal((40, 6))
    model = pca_fit(x, 3)
    v = (model.mean + model.components[:, 1]).reshape(1, -1)
    proj = pca_project(model, v)
    np.testing.assert_allclose(proj, [[0.0, 1.0, 0.0]], atol=1e-10)


def test_pca_bessel_inequality():
    x = make_rng(6).standard_normal((40, 10))
    model = pca_fit(x, 4)
    centered = x - model.mean
    proj = pca_project(model, x)
    assert np.all(np.sum(proj**2, axis=1) <= np.sum(centered**2, axis=1) + 1e-9)


def test_pca_reconstruction_error_nonincreasing_in_d():
    x = make_rng(7).standard_normal((80, 12))
    errors = []
    for d in (2, 4, 8, 12):
        model = pca_fit(x, d)
        recon = pca_reconstruct(model, pca_project(model, x))
        errors.append(np.mean((recon - x) ** 2))
    assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))


def test_pca_d_too_large():
    with pytest.raises(ValueError):
        pca_fit(np.zeros((10, 4)), 5)


# ---------------------------------------------------------------- truncation

def test_truncate_identity_and_hand_case():
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    np.testing.assert_array_equal(vanilla_truncate(x, 4), x)
    np.testing.assert_array_equal(vanilla_truncate(x, 2), [[1.0, 2.0]])


def test_truncate_too_large():
    with pytest.raises(ValueError):
        vanilla_truncate(np.zeros((2, 3)), 4)


# ---------------------------------------------------------------- pq

def test_pq_exhaustive_codebook_reproduces_rows():
    rng = make_rng(8)
    corpus = rng.standard_normal((16, 8))
    cb = pq_fit(corpus, m=1, k=16, seed=0)
    codes = pq_encode(cb, corpus)
    decoded = pq_decode(cb, codes)
    # every row must decode to some centroid at distance ~0 from itself
    np.testing.assert_allclose(decoded, corpus, atol=1e-9)
    q = rng.standard_normal(8)
    np.testing.assert_allclose(pq_score(cb, codes, q), corpus @ q, atol=1e-9)


def test_pq_two_cluster_fixed_point():
    rng = make_rng(9)
    a = rng.standard_normal((50, 4)) * 0.05 + 5.0
    b = rng.standard_normal((50, 4)) * 0.05 - 5.0
    corpus = np.vstack([a, b])
    cb = pq_fit(corpus, m=1, k=2, seed=1)
    got = np.sort(cb.centroids[0][:, 0])
    expect = np.sort([a.mean(axis=0)[0], b.mean(axis=0)[0]])
    np.testing.assert_allclose(got, expect, atol=1e-6)


def test_pq_rank_fidelity():
    rng = make_rng(10)
    centers = rng.standard_normal((16, 32))
    corpus = np.repeat(centers, 16, axis=0) + 0.25 * rng.standard_normal((256, 32))
    cb = pq_fit(corpus, m=4, k=16, seed=2)
    codes = pq_encode(cb, corpus)
    q = rng.standard_normal(32)
    approx = pq_score(cb, codes, q)
    exact = corpus @ q
    rho = spearmanr(approx, exact).statistic
    assert rho > 0.9


def test_pq_degenerate_corpus_warns():
    corpus = np.ones((20, 4))
    with pytest.warns(UserWarning, match="duplicated centroids"):
        pq_fit(corpus, m=1, k=3, seed=0)


def test_pq_deterministic_under_seed():
    corpus = make_rng(11).standard_normal((64, 8))
    cb1 = pq_fit(corpus, m=2, k=8, seed=7)
    cb2 = pq_fit(corpus, m=2, k=8, seed=7)
    np.testing.assert_array_equal(cb1.centroids, cb2.centroids)


def test_pq_invalid_configs():
    corpus = np.zeros((10, 7))
    with pytest.raises(ValueError):
        pq_fit(corpus, m=2, k=4)       # 7 not divisible by 2
    with pytest.raises(ValueError):
        pq_fit(np.zeros((3, 4)), m=1, k=8)  # k > rows
