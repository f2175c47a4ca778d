"""Comparison methods: PCA + uniform quantization, vanilla truncation, and a
product-quantization 8-bit reference."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numkit import ShapeError, as_matrix, make_rng


@dataclass
class PcaModel:
    mean: np.ndarray          # (D,)
    components: np.ndarray    # (D, d), orthonormal columns, descending eigenvalue
    eigenvalues: np.ndarray   # (d,)


def pca_fit(corpus: np.ndarray, d: int) -> PcaModel:
    """Top-d principal components of the mean-centered corpus.

    Backed by a full symmetric eigendecomposition of the covariance; the test
    suite checks it against an independent hand-written Jacobi oracle.  Sign
    convention: first nonzero coordinate of each component is positive.
    """
    corpus = as_matrix(corpus, "corpus")
    n, D = corpus.shape
    if d > D:
        raise ValueError(f"d={d} exceeds input dimension {D}")
    if n < d:
        raise ValueError(f"need at least d={d} rows, got {n}")
    mean = corpus.mean(axis=0)
    centered = corpus - mean
    cov = centered.T @ centered / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order]
    for j in range(d):
        col = comps[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            comps[:, j] = -col
    return PcaModel(mean=mean, components=comps, eigenvalues=evals)


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[1] != model.mean.size:
        raise ShapeError(f"input dim {x.shape[1]} != model dim {model.mean.size}")
    return (x - model.mean) @ model.components


def pca_reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    z = as_matrix(z, "z")
    return z @ model.components.T + model.mean


def vanilla_truncate(x: np.ndarray, d: int) -> np.ndarray:
    """First d coordinates of each row, unchanged."""
    x = as_matrix(x, "x")
    if d > x.shape[1]:
        raise ValueError(f"d={d} exceeds input dimension {x.shape[1]}")
    return x[:, :d].copy()


@dataclass
class PqCodebook:
    m: int                    # subspace count
    k: int                    # centroids per subspace
    centroids: np.ndarray     # (m, k, D/m)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ seeding: spread initial centroids proportionally to
    squared distance from those already chosen."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
            continue
        idx = np.searchsorted(np.cumsum(d2), rng.random() * total)
        centroids[j] = x[min(idx, n - 1)]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _kmeans(x: np.ndarray, k: int, rng: np.random.Generator, iters: int = 25):
    """Seeded Lloyd k-means with k-means++ init; empty clusters are re-seeded
    to the point farthest from its assigned centroid."""
    n = x.shape[0]
    centroids = _kmeans_pp_init(x, k, rng)
    for _ in range(iters):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        for j in range(k):
            mask = assign == j
            if mask.any():
                centroids[j] = x[mask].mean(axis=0)
            else:
                centroids[j] = x[d2[np.arange(n), assign].argmax()]
    if len(np.unique(centroids.round(12), axis=0)) < k:
        warnings.warn("degenerate corpus: k-means produced duplicated centroids")
    return centroids


def pq_fit(corpus: np.ndarray, m: int = 8, k: int = 256, seed: int = 0) -> PqCodebook:
    corpus = as_matrix(corpus, "corpus")
    n, D = corpus.shape
    if D % m != 0:
        raise ValueError(f"dimension {D} not divisible by m={m}")
    if k > n:
        raise ValueError(f"k={k} exceeds corpus size {n}")
    rng = make_rng(seed)
    sub = D // m
    centroids = np.empty((m, k, sub))
    for s in range(m):
        centroids[s] = _kmeans(corpus[:, s * sub:(s + 1) * sub], k, rng)
    return PqCodebook(m=m, k=k, centroids=centroids)


def pq_encode(cb: PqCodebook, x: np.ndarray) -> np.ndarray:
    """Nearest sub-codebook centroid per subspace; codes shape (n, m)."""
    x = as_matrix(x, "x")
    sub = cb.centroids.shape[2]
    if x.shape[1] != cb.m * sub:
        raise ShapeError("input dim does not match codebook")
    codes = np.empty((x.shape[0], cb.m), dtype=np.int64)
    for s in range(cb.m):
        block = x[:, s * sub:(s + 1) * sub]
        d2 = ((block[:, None, :] - cb.centroids[s][None, :, :]) ** 2).sum(axis=2)
        codes[:, s] = d2.argmin(axis=1)
    return codes


def pq_decode(cb: PqCodebook, codes: np.ndarray) -> np.ndarray:
    sub = cb.centroids.shape[2]
    out = np.empty((codes.shape[0], cb.m * sub))
    for s in range(cb.m):
        out[:, s * sub:(s + 1) * sub] = cb.centroids[s][codes[:, s]]
    return out


def pq_score(cb: PqCodebook, codes: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Asymmetric inner-product scoring: the query stays float and is matched
    against per-subspace centroid lookup tables."""
    query = np.asarray(query, dtype=np.float64).ravel()
    sub = cb.centroids.shape[2]
    if query.size != cb.m * sub:
        raise ShapeError("query dim does not match codebook")
    scores = np.zeros(codes.shape[0])
    for s in range(cb.m):
        lut = cb.centroids[s] @ query[s * sub:(s + 1) * sub]
        scores += lut[codes[:, s]]
    return scores
