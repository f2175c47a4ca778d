"""Walkthrough of the embedding-shaping pipeline.

Builds a small clustered corpus, trains the learnable compression +
quantization stack for a handful of epochs, and compares retrieval quality
against fixed baselines at the same dimension and bit width.

Run:  python3 demos/01_shaping_pipeline.py
"""

import numpy as np

from cqcim.baselines import pca_fit, pca_project, vanilla_truncate
from cqcim.cimsim import PRESETS, QuantizedCorpus
from cqcim.numkit import make_rng
from cqcim.retrieval import RunResult, ndcg_at_k, rank_scores
from cqcim.shaping import FixedQuantizer
from cqcim.synth import make_clustered_corpus
from cqcim.training import ShapingModel, TrainConfig, train

corpus, queries, qrels = make_clustered_corpus(
    n_docs=512, n_clusters=8, dim=192, n_queries=32, noise=0.4, seed=0)
d, K = 64, 4


def ndcg(q, docs):
    top, ts = rank_scores(q @ docs.T, 10)
    return ndcg_at_k(RunResult(ranking=top, scores=ts), qrels, 10)


print(f"corpus: {corpus.shape[0]} docs x {corpus.shape[1]}-D, "
      f"target {d}-D at {K} levels")
print(f"float nDCG@10 (topline): {ndcg(queries, corpus):.4f}\n")

# The model starts at the top-d principal directions with quantizer
# thresholds calibrated on the compressed corpus, then trains the joint
# contrastive + reconstruction objective with level-aware noise injection.
model = ShapingModel.init(corpus, d, K, PRESETS["D-2"], sigma_g=0.1,
                          rng=make_rng(0))
curve = train(corpus, model, TrainConfig(epochs=10, seed=0))
print("loss curve:", "  ".join(f"{v:.4f}" for v in curve))

codes, _ = model.shape(corpus)            # inference path: no noise
qc = QuantizedCorpus(codes=codes, dequant=model.quantizer.out_levels, K=K)
q = model.compress(queries)               # queries stay full precision
print(f"\nlearned pipeline   nDCG@10: {ndcg(q, qc.dequantized()):.4f}")

# Baseline 1: PCA projection + uniform 2-bit grid.
pca = pca_fit(corpus, d)
docs_p, q_p = pca_project(pca, corpus), pca_project(pca, queries)
fq = FixedQuantizer("uniform_2bit", float(np.percentile(np.abs(docs_p), 99)))
codes_p, y_p = fq.quantize(docs_p)
print(f"pca + uniform 2bit nDCG@10: {ndcg(q_p, y_p):.4f}")

# Baseline 2: plain coordinate truncation + uniform 2-bit grid.
docs_v = vanilla_truncate(corpus, d)
docs_v /= np.linalg.norm(docs_v, axis=1, keepdims=True)
q_v = vanilla_truncate(queries, d)
q_v /= np.linalg.norm(q_v, axis=1, keepdims=True)
fv = FixedQuantizer("uniform_2bit", float(np.percentile(np.abs(docs_v), 99)))
_, y_v = fv.quantize(docs_v)
print(f"truncate + 2bit    nDCG@10: {ndcg(q_v, y_v):.4f}")
