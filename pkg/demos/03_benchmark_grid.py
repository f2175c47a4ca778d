"""Walkthrough of the benchmark grid runner.

Prepares one grid cell per method (learned pipeline, PCA baseline, plain
truncation), evaluates each across the ideal scorer and every built-in
device with stochastic level flips, and prints both report forms.

Run:  python3 demos/03_benchmark_grid.py
"""

import numpy as np

from cqcim.baselines import pca_fit, pca_project, vanilla_truncate
from cqcim.cimsim import PRESETS, QuantizedCorpus
from cqcim.numkit import make_rng
from cqcim.retrieval import (EvalCell, results_to_jsonl, results_to_text,
                             run_grid)
from cqcim.shaping import FixedQuantizer
from cqcim.synth import make_clustered_corpus
from cqcim.training import ShapingModel, TrainConfig, train

corpus, queries, qrels = make_clustered_corpus(
    n_docs=512, n_clusters=8, dim=192, n_queries=32, noise=0.4, seed=0)
d = 64

model = ShapingModel.init(corpus, d, 4, PRESETS["D-2"], 0.1, make_rng(0))
train(corpus, model, TrainConfig(epochs=10, seed=0))
codes, _ = model.shape(corpus)
cq_cell = EvalCell(
    docs=QuantizedCorpus(codes=codes, dequant=model.quantizer.out_levels, K=4),
    queries=model.compress(queries), method="learned", precision="2bit", dim=d)

pca = pca_fit(corpus, d)
docs_p = pca_project(pca, corpus)
fq = FixedQuantizer("uniform_2bit", float(np.percentile(np.abs(docs_p), 99)))
pca_cell = EvalCell(
    docs=QuantizedCorpus(codes=fq.quantize(docs_p)[0], dequant=fq.codebook(), K=4),
    queries=pca_project(pca, queries), method="pca", precision="2bit", dim=d)

docs_v = vanilla_truncate(corpus, d)
docs_v /= np.linalg.norm(docs_v, axis=1, keepdims=True)
q_v = vanilla_truncate(queries, d)
q_v /= np.linalg.norm(q_v, axis=1, keepdims=True)
fv = FixedQuantizer("uniform_2bit", float(np.percentile(np.abs(docs_v), 99)))
van_cell = EvalCell(
    docs=QuantizedCorpus(codes=fv.quantize(docs_v)[0], dequant=fv.codebook(), K=4),
    queries=q_v, method="vanilla", precision="2bit", dim=d)

devices = {"ideal": None}
devices.update({k: PRESETS[k] for k in sorted(PRESETS)})
records = run_grid([cq_cell, pca_cell, van_cell], qrels, devices=devices,
                   noise_scale=1.0, flips=True, seed=7)

print(results_to_text(records))
print("same records as JSONL (first two lines):")
for line in results_to_jsonl(records).splitlines()[:2]:
    print(" ", line)
