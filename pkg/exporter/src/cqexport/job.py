"""Export jobs: read one document per line, run the encoder, write bytes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List

import numpy as np

from .encoder import load_encoder
from .formats import write_embeddings, write_paired_views

DEFAULT_DROPOUT_POS = 0.05
DEFAULT_DROPOUT_NEG = 0.20


class EmptyInputError(ValueError):
    """The input file holds no non-blank lines."""


@dataclass
class ExportJob:
    model: str
    input_path: str
    output_path: str
    views: str = "single"            # "single" | "paired"
    dropout_active: bool = True
    dropout_pos: float = DEFAULT_DROPOUT_POS
    dropout_neg: float = DEFAULT_DROPOUT_NEG
    with_negative: bool = False
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.views not in ("single", "paired"):
            raise ValueError(f"views must be 'single' or 'paired', got {self.views!r}")
        if not 0 <= self.dropout_pos < 1 or not 0 <= self.dropout_neg < 1:
            raise ValueError("dropout rates must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.views == "paired" and not self.dropout_active:
            warnings.warn("paired export without active dropout produces "
                          "identical views; pass an augmentation if that is "
                          "not intended")


def read_texts(path: str) -> List[str]:
    with open(path, "r", encoding="utf-8") as fh:
        texts = [line.rstrip("\n") for line in fh]
    texts = [t for t in texts if t.strip()]
    if not texts:
        raise EmptyInputError(f"no non-blank lines in {path}")
    return texts


def _encode_batched(encoder, texts, dropout_rate, rng, batch_size):
    parts = []
    for start in range(0, len(texts), batch_size):
        parts.append(encoder.encode(texts[start:start + batch_size],
                                    dropout_rate=dropout_rate, rng=rng))
    return np.concatenate(parts, axis=0)


def run_export(job: ExportJob) -> dict:
    """Execute the job and return a small summary dict.

    Raises EncoderLoadError if the model cannot be constructed and
    EmptyInputError if the input file has no content lines."""
    encoder = load_encoder(job.model)
    texts = read_texts(job.input_path)
    rng = np.random.default_rng(job.seed)

    if job.views == "single":
        rate = job.dropout_pos if job.dropout_active else 0.0
        emb = _encode_batched(encoder, texts, rate, rng, job.batch_size)
        write_embeddings(job.output_path, emb)
        summary = {"count": len(texts), "dim": encoder.dim, "views": 1}
    else:
        rate_pos = job.dropout_pos if job.dropout_active else 0.0
        anchor = _encode_batched(encoder, texts, rate_pos, rng, job.batch_size)
        positive = _encode_batched(encoder, texts, rate_pos, rng, job.batch_size)
        negative = None
        if job.with_negative:
            rate_neg = job.dropout_neg if job.dropout_active else 0.0
            negative = _encode_batched(encoder, texts, rate_neg, rng, job.batch_size)
        write_paired_views(job.output_path, anchor, positive, negative)
        summary = {"count": len(texts), "dim": encoder.dim,
                   "views": 3 if job.with_negative else 2}
    return summary
