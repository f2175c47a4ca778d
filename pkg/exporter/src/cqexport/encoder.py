"""Sentence encoders: a pretrained-transformer wrapper and a deterministic
offline hash encoder.

Both produce mean-pooled, L2-normalized sentence vectors and support
dropout-active stochastic forward passes, which is how positive (and
negative) views of the same sentence are realized.
"""

from __future__ import annotations

import hashlib
from typing import List, Optional

import numpy as np


class EncoderLoadError(RuntimeError):
    """The requested encoder could not be constructed."""


class HashEncoder:
    """Deterministic offline encoder.

    Each whitespace token maps to a fixed Gaussian vector seeded by the
    SHA-256 of the token; a sentence is the mean of its token vectors,
    L2-normalized.  Dropout zeroes token-vector components with the given
    probability and rescales survivors by 1/(1-p), mirroring inverted
    dropout in a transformer forward pass.  Selected by model names of the
    form ``hash-<dim>`` (e.g. ``hash-64``).
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise EncoderLoadError(f"hash encoder dim must be positive, got {dim}")
        self.dim = int(dim)

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little")
        return np.random.default_rng(seed).standard_normal(self.dim)

    def encode(self, texts: List[str], dropout_rate: float = 0.0,
               rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if dropout_rate and rng is None:
            raise ValueError("dropout-active encoding needs a random generator")
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            tokens = text.split() or [""]
            vecs = np.stack([self._token_vector(tok) for tok in tokens])
            if dropout_rate:
                keep = rng.random(vecs.shape) >= dropout_rate
                vecs = vecs * keep / (1.0 - dropout_rate)
            pooled = vecs.mean(axis=0)
            norm = np.linalg.norm(pooled)
            out[i] = pooled / norm if norm > 0 else pooled
        return out


class TransformerEncoder:
    """Wrapper over a sentence-transformers model.

    Dropout-active passes put the underlying torch module in train mode and
    seed torch's generator from the supplied one, so exports remain
    reproducible for a fixed seed.
    """

    def __init__(self, model_name: str):
        try:
            import torch  # noqa: F401
            from sentence_transformers import SentenceTransformer
            self._torch = torch
            self._model = SentenceTransformer(model_name)
        except Exception as exc:  # model missing, no network, bad name, ...
            raise EncoderLoadError(f"cannot load encoder {model_name!r}: {exc}") from exc
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: List[str], dropout_rate: float = 0.0,
               rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if dropout_rate and rng is None:
            raise ValueError("dropout-active encoding needs a random generator")
        if dropout_rate:
            self._torch.manual_seed(int(rng.integers(2**63)))
            self._model.train()
        else:
            self._model.eval()
        with self._torch.no_grad():
            emb = self._model.encode(texts, convert_to_numpy=True,
                                     normalize_embeddings=True,
                                     batch_size=32)
        self._model.eval()
        return np.asarray(emb, dtype=np.float64)


def load_encoder(model: str):
    """``hash-<dim>`` selects the offline encoder; anything else is treated
    as a sentence-transformers model name or path."""
    if model.startswith("hash-"):
        suffix = model[len("hash-"):]
        if not suffix.isdigit():
            raise EncoderLoadError(f"bad hash encoder spec {model!r}; use hash-<dim>")
        return HashEncoder(int(suffix))
    return TransformerEncoder(model)
