"""Stand-alone writers for the binary formats the cqcim toolkit reads.

The layouts are re-implemented here (not imported) so this client stays a
separate component that interoperates purely at the byte level:

  CQEM  embedding file: {magic, version u32, count u32, dim u32, dtype u32
        (0 = f32)}, row-major f32 payload, optional id table of
        length-prefixed UTF-8 strings.
  CQPV  paired view file: same header plus view_count u32 in {2, 3}, then
        anchor / positive (/ negative) blocks stored contiguously.

All integers are little-endian.
"""

from __future__ import annotations

import struct
from typing import List, Optional

import numpy as np

MAGIC_EMBED = b"CQEM"
MAGIC_PAIRED = b"CQPV"
FORMAT_VERSION = 1
DTYPE_F32 = 0


def _as_f32_matrix(matrix: np.ndarray) -> np.ndarray:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError("payload must be a 2-D matrix")
    return m


def write_embeddings(path, matrix: np.ndarray, ids: Optional[List[str]] = None):
    m = _as_f32_matrix(matrix)
    count, dim = m.shape
    if ids is not None and len(ids) != count:
        raise ValueError("id table length must equal row count")
    with open(path, "wb") as fh:
        fh.write(MAGIC_EMBED)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, count, dim, DTYPE_F32))
        fh.write(m.tobytes())
        if ids is not None:
            for s in ids:
                raw = s.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)) + raw)


def write_paired_views(path, anchor: np.ndarray, positive: np.ndarray,
                       negative: Optional[np.ndarray] = None):
    blocks = [_as_f32_matrix(anchor), _as_f32_matrix(positive)]
    if negative is not None:
        blocks.append(_as_f32_matrix(negative))
    count, dim = blocks[0].shape
    for block in blocks[1:]:
        if block.shape != (count, dim):
            raise ValueError("all view blocks must share the anchor's shape")
    with open(path, "wb") as fh:
        fh.write(MAGIC_PAIRED)
        fh.write(struct.pack("<IIIII", FORMAT_VERSION, count, dim, DTYPE_F32,
                             len(blocks)))
        for block in blocks:
            fh.write(block.tobytes())


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarities between two matrices (native reference
    values for cross-component comparisons)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    return an @ bn.T
