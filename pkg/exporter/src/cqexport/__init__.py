"""Thin export client: runs a sentence encoder (a pretrained transformer or
the built-in deterministic hash encoder) over a text file and writes the
binary embedding / paired-view formats consumed by the cqcim toolkit."""

from .encoder import HashEncoder, load_encoder
from .formats import cosine_matrix, write_embeddings, write_paired_views
from .job import ExportJob, run_export

__all__ = [
    "ExportJob",
    "HashEncoder",
    "cosine_matrix",
    "load_encoder",
    "run_export",
    "write_embeddings",
    "write_paired_views",
]

__version__ = "0.1.0"
