"""Command-line entry point: `train`, `shape`, `eval`, `baseline`, and
`profile list`, plus the JSON training configuration.

All commands honor `--seed`; identical invocations produce byte-identical
outputs.  The env var CQCIM_THREADS caps internal worker count (the current
implementation is single-threaded, so any value of 1 or more is accepted).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields
from typing import Optional

import numpy as np

from . import baselines, fileio, retrieval
from .cimsim import PRESETS, DeviceProfile, QuantizedCorpus, load_profile
from .numkit import make_rng
from .shaping import FixedQuantizer
from .training import LossConfig, ShapingModel, TrainConfig, train

PRECISION_MODES = {
    "1bit": "binary_1bit",
    "1.58bit": "ternary_1p58bit",
    "2bit": "uniform_2bit",
    "int4": "uniform_int4",
}
PRECISION_LEVELS = {"1bit": 2, "1.58bit": 3, "2bit": 4, "int4": 16}


class UsageError(SystemExit):
    def __init__(self, message: str):
        print(f"error: {message}", file=sys.stderr)
        super().__init__(2)


def worker_count() -> int:
    raw = os.environ.get("CQCIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"CQCIM_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise UsageError("CQCIM_THREADS must be >= 1")
    return n


TRAIN_CONFIG_KEYS = {
    "embeddings", "paired_file", "dim", "levels", "precision", "device",
    "lambda_mse", "temperature", "pca_init", "out", "loss_csv",
} | {f.name for f in fields(TrainConfig)}


def resolve_device(name: str) -> Optional[DeviceProfile]:
    if name == "ideal":
        return None
    if name in PRESETS:
        return PRESETS[name]
    if os.path.exists(name):
        return load_profile(name)
    raise UsageError(f"unknown device preset {name!r}; choose from "
                     f"ideal, {', '.join(sorted(PRESETS))} or a JSON path")


def load_train_config(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed config {path}: line {e.lineno}: {e.msg}")
    unknown = set(doc) - TRAIN_CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "embeddings" not in doc:
        raise UsageError("config is missing the 'embeddings' field")
    lam = doc.get("lambda_mse", 8.0)
    if lam < 0:
        raise UsageError("lambda_mse must be >= 0")
    train_kwargs = {f.name: doc[f.name] for f in fields(TrainConfig) if f.name in doc}
    try:
        cfg = TrainConfig(**train_kwargs)
        loss_cfg = LossConfig(temperature=doc.get("temperature", 0.05), lambda_mse=lam)
    except ValueError as e:
        raise UsageError(f"invalid config field: {e}")
    return doc, cfg, loss_cfg


def cmd_train(args) -> int:
    doc, cfg, loss_cfg = load_train_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    emb_path = doc["embeddings"]
    if not os.path.exists(emb_path):
        raise UsageError(f"embedding file not found: {emb_path}")
    corpus, _ = fileio.read_embeddings(emb_path)
    profile = resolve_device(doc.get("device", "D-2")) or PRESETS["D-2"]
    K = doc.get("levels") or PRECISION_LEVELS.get(doc.get("precision", "2bit"), 4)
    d = doc.get("dim", min(128, corpus.shape[1]))
    paired = None
    if cfg.pair_mode == "from_file":
        paired_path = doc.get("paired_file")
        if not paired_path or not os.path.exists(paired_path):
            raise UsageError("pair_mode 'from_file' needs an existing 'paired_file'")
        paired = fileio.read_paired_views(paired_path)
    rng = make_rng(cfg.seed)
    model = ShapingModel.init(corpus, d, K, profile, cfg.sigma_g, rng,
                              pca_init=doc.get("pca_init", True))
    curve = train(corpus, model, cfg, loss_cfg, paired=paired)
    out = args.out or doc.get("out", "model.cqck")
    meta = {k: v for k, v in doc.items() if k not in ("out", "loss_csv")}
    meta["seed"] = cfg.seed
    fileio.write_checkpoint(out, model.head, model.quantizer, model.noise,
                            model.lift, meta)
    curve_path = doc.get("loss_csv", out + ".losses.csv")
    with open(curve_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(curve):
            writer.writerow([i, repr(v)])
    print(f"wrote {out} ({len(curve)} epochs)")
    return 0


def cmd_shape(args) -> int:
    model, _ = fileio.read_checkpoint(args.checkpoint)
    emb, _ = fileio.read_embeddings(args.embeddings)
    codes, _ = model.shape(emb)
    corpus = QuantizedCorpus(codes=codes, dequant=model.quantizer.out_levels,
                             K=model.quantizer.K)
    fileio.write_quantized_corpus(args.out, corpus)
    print(f"wrote {args.out} ({codes.shape[0]} x {codes.shape[1]}, K={corpus.K})")
    return 0


def _load_docs(path: str):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == fileio.MAGIC_QUANTIZED:
        return fileio.read_quantized_corpus(path)
    return fileio.read_embeddings(path)[0]


def cmd_eval(args) -> int:
    docs = _load_docs(args.corpus)
    queries, _ = fileio.read_embeddings(args.queries)
    if args.checkpoint:
        model, _ = fileio.read_checkpoint(args.checkpoint)
        queries = model.compress(queries)
    qrels = fileio.read_qrels(args.qrels)
    device = resolve_device(args.device)
    dim = docs.codes.shape[1] if isinstance(docs, QuantizedCorpus) else docs.shape[1]
    cell = retrieval.EvalCell(docs=docs, queries=queries, method=args.method,
                              precision=args.precision, dim=dim)
    records = retrieval.run_grid(
        [cell], qrels, devices={args.device: device},
        noise_scale=args.noise_scale, flips=not args.no_flips,
        seed=args.seed if args.seed is not None else 0)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(retrieval.results_to_jsonl(records))
    print(retrieval.results_to_text(records), end="")
    return 0


def cmd_baseline(args) -> int:
    emb, _ = fileio.read_embeddings(args.embeddings)
    d = args.dim or emb.shape[1]
    if args.kind == "pq":
        if args.precision != "int4" and args.precision is not None:
            pass  # PQ codes are codebook indices; precision flag does not apply
        cb = baselines.pq_fit(emb, m=args.pq_m, k=args.pq_k,
                              seed=args.seed if args.seed is not None else 0)
        codes = baselines.pq_encode(cb, emb)
        fileio.write_pq(args.out, cb, codes)
        print(f"wrote {args.out} (m={cb.m}, k={cb.k})")
        return 0
    if args.kind == "pca":
        model = baselines.pca_fit(emb, d)
        proj = baselines.pca_project(model, emb)
        query_proj = lambda q: baselines.pca_project(model, q)
    elif args.kind == "vanilla":
        proj = baselines.vanilla_truncate(emb, d)
        norms = np.linalg.norm(proj, axis=1, keepdims=True)
        proj = proj / np.where(norms == 0, 1.0, norms)

        def query_proj(q):
            t = baselines.vanilla_truncate(q, d)
            n = np.linalg.norm(t, axis=1, keepdims=True)
            return t / np.where(n == 0, 1.0, n)
    else:
        raise UsageError(f"unknown baseline kind {args.kind!r}")
    precision = args.precision or "2bit"
    if precision not in PRECISION_MODES:
        raise UsageError(f"invalid precision {precision!r}; choose from "
                         f"{', '.join(PRECISION_MODES)}")
    scale = float(np.percentile(np.abs(proj), 99.0))
    if scale <= 0:
        scale = 1.0
    fq = FixedQuantizer(PRECISION_MODES[precision], scale)
    codes, _ = fq.quantize(proj)
    corpus = QuantizedCorpus(codes=codes, dequant=fq.codebook(), K=fq.K)
    fileio.write_quantized_corpus(args.out, corpus)
    if args.queries and args.queries_out:
        q, _ = fileio.read_embeddings(args.queries)
        fileio.write_embeddings(args.queries_out, query_proj(q))
    print(f"wrote {args.out} ({args.kind}, {precision}, d={d})")
    return 0


def cmd_profile(args) -> int:
    if args.action != "list":
        raise UsageError("the only profile action is 'list'")
    for key in sorted(PRESETS):
        p = PRESETS[key]
        sig = ", ".join(f"{s:.4f}" for s in p.sigma_v)
        print(f"{key}  {p.name:8s}  levels={p.levels}  sigma_v=[{sig}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqcim",
        description="Hardware-aware embedding shaping and CiM retrieval simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the shaping pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("shape", help="compress and quantize an embedding file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("eval", help="retrieval metrics, optionally through the device simulator")
    p.add_argument("--corpus", required=True, help="quantized corpus or embedding file")
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--checkpoint", default=None, help="compress queries with this model")
    p.add_argument("--device", default="ideal")
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--no-flips", action="store_true")
    p.add_argument("--method", default="cqcim")
    p.add_argument("--precision", default="2bit")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="JSONL results path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="fit and apply a comparison method")
    p.add_argument("--kind", required=True, choices=["pca", "vanilla", "pq"])
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--precision", default=None, choices=list(PRECISION_MODES))
    p.add_argument("--pq-m", type=int, default=8)
    p.add_argument("--pq-k", type=int, default=256)
    p.add_argument("--queries", default=None)
    p.add_argument("--queries-out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("profile", help="device profile utilities")
    p.add_argument("action", choices=["list"])
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    worker_count()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        raise UsageError(f"file not found: {e.filename}")
    except fileio.FileFormatError as e:
        raise UsageError(str(e))


if __name__ == "__main__":
    sys.exit(main())
