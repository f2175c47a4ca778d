"""Hardware-aware embedding shaping for compute-in-memory retrieval:
learnable compression, device-noise-aware training, low-bit quantization,
baselines, a multi-level crossbar simulator, and retrieval evaluation."""

from . import baselines, cimsim, fileio, numkit, retrieval, shaping, synth, training
from .cimsim import (ArraySpec, DeviceProfile, PRESETS, QuantizedCorpus,
                     TransitionMatrix, apply_flips, crossbar_mips,
                     derive_transition_matrix, int4_slicing_cost)
from .numkit import finite_diff_grad, gaussian, make_rng, matmul
from .retrieval import EvalCell, RunResult, exact_mips, ndcg_at_k, recall_at_k, run_grid
from .shaping import (CompressionHead, FixedQuantizer, N2uqQuantizer, NoiseSpec,
                      find_level, inject_noise)
from .synth import make_clustered_corpus
from .training import (Adam, LossConfig, ShapingModel, TrainConfig, ViewBatch,
                       contrastive_loss, joint_loss, make_views, mse_loss, train)

__version__ = "0.1.0"
