"""Seeded synthetic clustered corpora with cluster-mate relevance judgments,
used by the benchmark properties and the demo scripts."""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from .numkit import make_rng


def make_clustered_corpus(n_docs: int = 1024, n_clusters: int = 8, dim: int = 384,
                          n_queries: int = 64, noise: float = 0.4, seed: int = 0
                          ) -> Tuple[np.ndarray, np.ndarray, Dict[int, Dict[int, float]]]:
    """Unit-norm documents drawn around random cluster centers.

    Documents are assigned to clusters round-robin; each query is a noisy
    draw from one center and its cluster mates are the relevant documents
    (grade 1).  Returns (corpus, queries, qrels)."""
    rng = make_rng(seed)
    centers = rng.standard_normal((n_clusters, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    doc_cluster = np.arange(n_docs) % n_clusters
    docs = centers[doc_cluster] + noise * rng.standard_normal((n_docs, dim))
    docs /= np.linalg.norm(docs, axis=1, keepdims=True)

    query_cluster = np.arange(n_queries) % n_clusters
    queries = centers[query_cluster] + noise * rng.standard_normal((n_queries, dim))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)

    qrels: Dict[int, Dict[int, float]] = {}
    for q in range(n_queries):
        mates = np.flatnonzero(doc_cluster == query_cluster[q])
        qrels[q] = {int(doc): 1.0 for doc in mates}
    return docs, queries, qrels
