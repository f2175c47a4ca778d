"""Exact max-inner-product search, Recall@k / nDCG@k, and the benchmark grid
runner (method x precision x dimension x device)."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .cimsim import (ArraySpec, DeviceProfile, QuantizedCorpus, apply_flips,
                     crossbar_mips, derive_transition_matrix, profile_for_levels)
from .numkit import ShapeError, as_matrix, make_rng

# qid -> {doc id: relevance grade >= 1}
Qrels = Dict[int, Dict[int, float]]


@dataclass
class RunResult:
    """Per-query ranked doc ids with scores plus grid-cell labels.  Rankings
    are strictly ordered by (score desc, doc id asc)."""

    ranking: np.ndarray   # (n_queries, k) doc ids
    scores: np.ndarray    # (n_queries, k)
    method: str = "exact"
    precision: str = "float"
    dim: int = 0
    device: str = "ideal"


def rank_scores(scores: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top-k ids per row with deterministic (score desc, doc id asc) order."""
    n_docs = scores.shape[1]
    if k > n_docs:
        warnings.warn(f"k={k} clamped to corpus size {n_docs}")
        k = n_docs
    ids = np.arange(n_docs)
    order = np.lexsort((np.broadcast_to(ids, scores.shape), -scores), axis=1)
    top = order[:, :k]
    return top, np.take_along_axis(scores, top, axis=1)


def exact_mips(queries: np.ndarray, corpus: np.ndarray, k: int) -> RunResult:
    """Brute-force top-k by inner product."""
    queries = as_matrix(queries, "queries")
    corpus = as_matrix(corpus, "corpus")
    if queries.shape[1] != corpus.shape[1]:
        raise ShapeError(f"query dim {queries.shape[1]} != corpus dim {corpus.shape[1]}")
    scores = queries @ corpus.T
    top, top_scores = rank_scores(scores, k)
    return RunResult(ranking=top, scores=top_scores, dim=corpus.shape[1])


def _iter_scored_queries(run: RunResult, qrels: Qrels):
    skipped = 0
    for qid in range(run.ranking.shape[0]):
        rel = qrels.get(qid)
        if not rel:
            skipped += 1
            continue
        yield qid, rel
    if skipped:
        warnings.warn(f"{skipped} queries without qrels were skipped")


def recall_at_k(run: RunResult, qrels: Qrels, k: int) -> float:
    """Mean over queries of |relevant in top-k| / |relevant|."""
    if k < 1:
        raise ValueError("k must be >= 1")
    vals = []
    for qid, rel in _iter_scored_queries(run, qrels):
        top = run.ranking[qid, :k]
        hits = sum(1 for doc in top if doc in rel)
        vals.append(hits / len(rel))
    return float(np.mean(vals)) if vals else 0.0


def ndcg_at_k(run: RunResult, qrels: Qrels, k: int) -> float:
    """DCG with gain = relevance grade and log2(rank+1) discount, normalized
    by the ideal DCG; mean over queries."""
    if k < 1:
        raise ValueError("k must be >= 1")
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    vals = []
    for qid, rel in _iter_scored_queries(run, qrels):
        top = run.ranking[qid, :k]
        gains = np.array([rel.get(doc, 0.0) for doc in top])
        dcg = float(gains @ discounts[:len(gains)])
        ideal = np.sort(np.array(list(rel.values())))[::-1][:k]
        idcg = float(ideal @ discounts[:len(ideal)])
        vals.append(dcg / idcg if idcg > 0 else 0.0)
    return float(np.mean(vals)) if vals else 0.0


@dataclass
class EvalCell:
    """One prepared grid cell: a document representation (float matrix for
    exact scoring, or a quantized corpus for device-mode scoring) plus the
    matching query matrix."""

    docs: Union[np.ndarray, QuantizedCorpus]
    queries: np.ndarray
    method: str
    precision: str
    dim: int


def score_cell(cell: EvalCell, device: Optional[DeviceProfile] = None,
               noise_scale: float = 0.0, flips: bool = False,
               spec: Optional[ArraySpec] = None,
               rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Score every query against the cell's documents.

    Ideal mode uses exact float inner products on (dequantized) values;
    device mode routes scoring through the crossbar simulator, optionally
    applying read-out level flips once per evaluation run."""
    queries = as_matrix(cell.queries, "queries")
    if device is None:
        docs = cell.docs.dequantized() if isinstance(cell.docs, QuantizedCorpus) else cell.docs
        return queries @ as_matrix(docs, "docs").T
    if not isinstance(cell.docs, QuantizedCorpus):
        raise ValueError("device-mode scoring needs a quantized corpus")
    corpus = cell.docs
    device = profile_for_levels(device, corpus.K)
    if flips:
        tm = derive_transition_matrix(device, noise_scale if noise_scale > 0 else 1.0)
        corpus = apply_flips(corpus, tm, rng)
    spec = spec or ArraySpec()
    scores = np.empty((queries.shape[0], corpus.codes.shape[0]))
    for i in range(queries.shape[0]):
        scores[i] = crossbar_mips(queries[i], corpus, spec, device, noise_scale, rng)
    return scores


def run_grid(cells: Sequence[EvalCell], qrels: Qrels,
             devices: Optional[Dict[str, Optional[DeviceProfile]]] = None,
             k_recall: int = 5, k_ndcg: int = 10, noise_scale: float = 1.0,
             flips: bool = True, spec: Optional[ArraySpec] = None,
             seed: int = 0) -> List[dict]:
    """Cartesian evaluation of prepared cells across devices.

    `devices` maps label -> DeviceProfile (None meaning ideal).  Returns one
    record per (cell, device); cells that cannot run on a device (e.g. float
    docs in device mode) are marked skipped."""
    devices = devices or {"ideal": None}
    rng = make_rng(seed)
    records = []
    k = max(k_recall, k_ndcg)
    for cell in cells:
        for label, device in devices.items():
            rec = {"method": cell.method, "precision": cell.precision,
                   "dim": cell.dim, "device": label, "skipped": False}
            try:
                scores = score_cell(cell, device=device, noise_scale=noise_scale,
                                    flips=flips, spec=spec, rng=rng)
            except ValueError:
                rec["skipped"] = True
                records.append(rec)
                continue
            top, top_scores = rank_scores(scores, min(k, scores.shape[1]))
            run = RunResult(ranking=top, scores=top_scores, method=cell.method,
                            precision=cell.precision, dim=cell.dim, device=label)
            rec[f"recall@{k_recall}"] = recall_at_k(run, qrels, k_recall)
            rec[f"ndcg@{k_ndcg}"] = ndcg_at_k(run, qrels, k_ndcg)
            records.append(rec)
    return records


def results_to_jsonl(records: List[dict]) -> str:
    return "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n"


def results_to_text(records: List[dict]) -> str:
    """Aligned human-readable table of grid results."""
    if not records:
        return "(no results)\n"
    metric_keys = [k for k in records[0] if k.startswith(("recall@", "ndcg@"))]
    header = ["method", "precision", "dim", "device"] + metric_keys
    rows = [header]
    for r in records:
        row = [str(r["method"]), str(r["precision"]), str(r["dim"]), str(r["device"])]
        for mk in metric_keys:
            row.append("skipped" if r.get("skipped") else f"{r.get(mk, float('nan')):.4f}")
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"
