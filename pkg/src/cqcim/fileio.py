"""Binary file formats tying the exporter, training, simulation, and
evaluation stages together.  All formats are little-endian, carry an explicit
magic/version, and round-trip bit-exactly.

  CQEM  embedding file: header {magic, version u32, count u32, dim u32,
        dtype u32 (0 = f32)}, row-major f32 payload, optional id table of
        length-prefixed UTF-8 strings.
  CQPV  paired view file: same header plus view_count u32 in {2, 3}, then
        anchor / positive (/ negative) blocks stored contiguously.
  CQCK  model checkpoint: sorted-key JSON metadata followed by raw f64
        arrays.
  CQQC  quantized corpus: codes in {0..K-1} as u8 plus the f64
        dequantization map.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Dict, List, Optional, Tuple

import numpy as np

from .cimsim import QuantizedCorpus
from .shaping import CompressionHead, N2uqQuantizer, NoiseSpec
from .training import ViewBatch

MAGIC_EMBED = b"CQEM"
MAGIC_PAIRED = b"CQPV"
MAGIC_CHECKPOINT = b"CQCK"
MAGIC_QUANTIZED = b"CQQC"
MAGIC_PQ = b"CQPQ"
FORMAT_VERSION = 1
DTYPE_F32 = 0


class FileFormatError(ValueError):
    """Malformed or mismatching file content."""


def _check_magic(data: bytes, magic: bytes, what: str):
    if data[:4] != magic:
        raise FileFormatError(f"bad magic for {what}: {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"unsupported {what} version {version}")


def _pack_ids(ids: List[str]) -> bytes:
    parts = []
    for s in ids:
        raw = s.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    return b"".join(parts)


def _unpack_ids(data: bytes, offset: int, count: int) -> List[str]:
    ids = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        ids.append(data[offset:offset + length].decode("utf-8"))
        offset += length
    return ids


def write_embeddings(path: str, matrix: np.ndarray, ids: Optional[List[str]] = None):
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise FileFormatError("embedding payload must be 2-D")
    count, dim = m.shape
    if ids is not None and len(ids) != count:
        raise FileFormatError("id table length must equal row count")
    with open(path, "wb") as fh:
        fh.write(MAGIC_EMBED)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, count, dim, DTYPE_F32))
        fh.write(m.tobytes())
        if ids is not None:
            fh.write(_pack_ids(ids))


def read_embeddings(path: str) -> Tuple[np.ndarray, Optional[List[str]]]:
    with open(path, "rb") as fh:
        data = fh.read()
    _check_magic(data, MAGIC_EMBED, "embedding file")
    count, dim, dtype = struct.unpack_from("<III", data, 8)
    if dtype != DTYPE_F32:
        raise FileFormatError(f"unsupported dtype code {dtype}")
    payload_len = count * dim * 4
    end = 20 + payload_len
    if len(data) < end:
        raise FileFormatError("truncated embedding payload")
    m = np.frombuffer(data, dtype="<f4", count=count * dim, offset=20)
    m = m.reshape(count, dim).astype(np.float64)
    ids = _unpack_ids(data, end, count) if len(data) > end else None
    return m, ids


def write_paired_views(path: str, batch: ViewBatch):
    blocks = [batch.anchor, batch.positive]
    if batch.negative is not None:
        blocks.append(batch.negative)
    count, dim = batch.anchor.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_PAIRED)
        fh.write(struct.pack("<IIIII", FORMAT_VERSION, count, dim, DTYPE_F32, len(blocks)))
        for block in blocks:
            fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def read_paired_views(path: str) -> ViewBatch:
    with open(path, "rb") as fh:
        data = fh.read()
    _check_magic(data, MAGIC_PAIRED, "paired view file")
    count, dim, dtype, views = struct.unpack_from("<IIII", data, 8)
    if dtype != DTYPE_F32:
        raise FileFormatError(f"unsupported dtype code {dtype}")
    if views not in (2, 3):
        raise FileFormatError(f"view_count must be 2 or 3, got {views}")
    block_len = count * dim * 4
    if len(data) < 24 + views * block_len:
        raise FileFormatError("truncated paired view payload")
    blocks = []
    for v in range(views):
        off = 24 + v * block_len
        block = np.frombuffer(data, dtype="<f4", count=count * dim, offset=off)
        blocks.append(block.reshape(count, dim).astype(np.float64))
    return ViewBatch(anchor=blocks[0], positive=blocks[1],
                     negative=blocks[2] if views == 3 else None)


def write_quantized_corpus(path: str, corpus: QuantizedCorpus):
    if corpus.K > 256:
        raise FileFormatError("u8 codes support at most 256 levels")
    count, dim = corpus.codes.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_QUANTIZED)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, count, dim, corpus.K))
        fh.write(np.ascontiguousarray(corpus.dequant, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(corpus.codes, dtype=np.uint8).tobytes())


def read_quantized_corpus(path: str) -> QuantizedCorpus:
    with open(path, "rb") as fh:
        data = fh.read()
    _check_magic(data, MAGIC_QUANTIZED, "quantized corpus")
    count, dim, K = struct.unpack_from("<III", data, 8)
    off = 20
    dequant = np.frombuffer(data, dtype="<f8", count=K, offset=off).copy()
    off += K * 8
    codes = np.frombuffer(data, dtype=np.uint8, count=count * dim, offset=off)
    return QuantizedCorpus(codes=codes.reshape(count, dim).astype(np.int64),
                           dequant=dequant, K=K)


def _config_hash(meta: dict) -> str:
    return hashlib.sha256(json.dumps(meta, sort_keys=True).encode("utf-8")).hexdigest()


def write_checkpoint(path: str, head: CompressionHead, quantizer: N2uqQuantizer,
                     noise: NoiseSpec, lift: np.ndarray, train_meta: dict):
    arrays = {
        "W": head.W, "b": head.b, "t": quantizer.t,
        "out_levels": quantizer.out_levels, "lift": lift,
        "lookup_thresholds": noise.lookup_thresholds,
        "profile_sigma_v": noise.profile.sigma_v,
        "profile_nominal": noise.profile.nominal,
    }
    meta = {
        "quantizer": {"kind": "n2uq", "K": quantizer.K,
                      "range_lo": quantizer.range_lo, "range_hi": quantizer.range_hi},
        "noise": {"sigma_g": noise.sigma_g,
                  "profile_name": noise.profile.name,
                  "profile_levels": int(noise.profile.levels)},
        "train": train_meta,
        "arrays": {name: list(np.shape(a)) for name, a in arrays.items()},
        "array_order": sorted(arrays),
    }
    meta["train"] = dict(train_meta, config_hash=_config_hash(train_meta))
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC_CHECKPOINT)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for name in meta["array_order"]:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def read_checkpoint(path: str):
    """Returns (ShapingModel, metadata dict); the loaded model reproduces
    forward outputs bit-exactly."""
    from .cimsim import DeviceProfile
    from .training import ShapingModel

    with open(path, "rb") as fh:
        data = fh.read()
    _check_magic(data, MAGIC_CHECKPOINT, "checkpoint")
    (blob_len,) = struct.unpack_from("<I", data, 8)
    meta = json.loads(data[12:12 + blob_len].decode("utf-8"))
    off = 12 + blob_len
    arrays = {}
    for name in meta["array_order"]:
        shape = tuple(meta["arrays"][name])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).copy()
        arrays[name] = arr.reshape(shape)
        off += n * 8
    head = CompressionHead(arrays["W"], arrays["b"])
    q = meta["quantizer"]
    quant = N2uqQuantizer(q["K"], arrays["t"], q["range_lo"], q["range_hi"],
                          out_levels=arrays["out_levels"])
    profile = DeviceProfile(name=meta["noise"]["profile_name"],
                            levels=meta["noise"]["profile_levels"],
                            sigma_v=arrays["profile_sigma_v"],
                            nominal=arrays["profile_nominal"])
    noise = NoiseSpec(profile=profile, sigma_g=meta["noise"]["sigma_g"],
                      lookup_thresholds=arrays["lookup_thresholds"])
    model = ShapingModel(head, quant, noise, arrays["lift"])
    return model, meta


def write_pq(path: str, cb, codes: np.ndarray):
    """Product-quantization codebook plus u16 codes: {magic, version, m, k,
    sub_dim, count}, centroids f64, codes row-major."""
    from .baselines import PqCodebook  # local import to avoid a cycle
    count = codes.shape[0]
    sub = cb.centroids.shape[2]
    with open(path, "wb") as fh:
        fh.write(MAGIC_PQ)
        fh.write(struct.pack("<IIIII", FORMAT_VERSION, cb.m, cb.k, sub, count))
        fh.write(np.ascontiguousarray(cb.centroids, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(codes, dtype="<u2").tobytes())


def read_pq(path: str):
    from .baselines import PqCodebook

    with open(path, "rb") as fh:
        data = fh.read()
    _check_magic(data, MAGIC_PQ, "pq codebook")
    m, k, sub, count = struct.unpack_from("<IIII", data, 8)
    off = 24
    cent = np.frombuffer(data, dtype="<f8", count=m * k * sub, offset=off)
    off += m * k * sub * 8
    codes = np.frombuffer(data, dtype="<u2", count=count * m, offset=off)
    cb = PqCodebook(m=m, k=k, centroids=cent.reshape(m, k, sub).copy())
    return cb, codes.reshape(count, m).astype(np.int64)


def read_qrels(path: str) -> Dict[int, Dict[int, float]]:
    """Tab-separated `query_id<TAB>doc_id<TAB>grade` lines."""
    qrels: Dict[int, Dict[int, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FileFormatError(f"qrels line {lineno}: expected 3 tab-separated fields")
            qid, doc, grade = int(parts[0]), int(parts[1]), float(parts[2])
            qrels.setdefault(qid, {})[doc] = grade
    return qrels


def write_qrels(path: str, qrels: Dict[int, Dict[int, float]]):
    with open(path, "w", encoding="utf-8") as fh:
        for qid in sorted(qrels):
            for doc in sorted(qrels[qid]):
                grade = qrels[qid][doc]
                grade_s = str(int(grade)) if float(grade).is_integer() else repr(grade)
                fh.write(f"{qid}\t{doc}\t{grade_s}\n")
