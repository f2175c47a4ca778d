"""Joint contrastive/reconstruction objective, dropout view construction,
Adam, and the end-to-end training loop over the shaping pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .numkit import NumericError, ShapeError, as_matrix, make_rng
from .shaping import CompressionHead, N2uqQuantizer, NoiseSpec, inject_noise


@dataclass
class ViewBatch:
    """Anchor rows with their positive (and optional negative) views; row i of
    each view corresponds to row i of the anchor."""

    anchor: np.ndarray
    positive: np.ndarray
    negative: Optional[np.ndarray] = None

    def __post_init__(self):
        self.anchor = as_matrix(self.anchor, "anchor")
        self.positive = as_matrix(self.positive, "positive")
        if self.positive.shape != self.anchor.shape:
            raise ShapeError("positive view must match anchor dims")
        if self.negative is not None:
            self.negative = as_matrix(self.negative, "negative")
            if self.negative.shape != self.anchor.shape:
                raise ShapeError("negative view must match anchor dims")


@dataclass
class LossConfig:
    temperature: float = 0.05
    lambda_mse: float = 8.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.lambda_mse < 0:
            raise ValueError("lambda_mse must be >= 0")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    sigma_g: float = 0.1
    dropout_rate_pos: float = 0.05
    dropout_rate_neg: Optional[float] = None
    pair_mode: str = "synthetic_dropout"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.dropout_rate_pos < 1:
            raise ValueError("dropout_rate_pos must be in [0, 1)")
        if self.dropout_rate_neg is not None and not 0 <= self.dropout_rate_neg < 1:
            raise ValueError("dropout_rate_neg must be in [0, 1)")
        if self.pair_mode not in ("from_file", "synthetic_dropout"):
            raise ValueError(f"unknown pair_mode {self.pair_mode!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def _normalize_rows(x: np.ndarray):
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise NumericError(f"zero-norm row {bad[0]} in cosine similarity")
    return x / norms[:, None], norms


def contrastive_loss(anchor: np.ndarray, positive: np.ndarray,
                     negative: Optional[np.ndarray] = None,
                     temperature: float = 0.05):
    """InfoNCE over cosine similarities: each anchor is pulled toward its own
    positive view and pushed from every other row's positive (and, when
    present, negative) view.

    Returns (loss, grad_anchor, grad_positive, grad_negative); gradients are
    analytic and validated against finite differences in the test suite.
    """
    h = as_matrix(anchor, "anchor")
    hp = as_matrix(positive, "positive")
    if h.shape != hp.shape:
        raise ShapeError("anchor and positive must share dims")
    n = h.shape[0]
    tau = float(temperature)
    a, na = _normalize_rows(h)
    b, nb = _normalize_rows(hp)
    sim_p = a @ b.T
    logits = [sim_p / tau]
    if negative is not None:
        hn = as_matrix(negative, "negative")
        c, nc = _normalize_rows(hn)
        sim_n = a @ c.T
        logits.append(sim_n / tau)
    z = np.concatenate(logits, axis=1)
    zmax = z.max(axis=1, keepdims=True)
    expz = np.exp(z - zmax)
    denom = expz.sum(axis=1, keepdims=True)
    logsumexp = np.log(denom) + zmax
    loss = float(np.mean(logsumexp[:, 0] - sim_p.diagonal() / tau))

    # dL/d sim = (softmax - onehot) / (n * tau), per similarity block
    soft = expz / denom
    gp = soft[:, :n].copy()
    gp[np.arange(n), np.arange(n)] -= 1.0
    gp /= n * tau

    def _cosine_backward(g, s, x_unit, y_unit, x_norm, y_norm):
        # s_ij = x_i . y_j with unit rows; chain through the normalization
        gx = g @ y_unit - ((g * s).sum(axis=1))[:, None] * x_unit
        gx /= x_norm[:, None]
        gy = g.T @ x_unit - ((g * s).sum(axis=0))[:, None] * y_unit
        gy /= y_norm[:, None]
        return gx, gy

    grad_h, grad_hp = _cosine_backward(gp, sim_p, a, b, na, nb)
    grad_hn = None
    if negative is not None:
        gn = soft[:, n:] / (n * tau)
        gh2, grad_hn = _cosine_backward(gn, sim_n, a, c, na, nc)
        grad_h = grad_h + gh2
    return loss, grad_h, grad_hp, grad_hn


def mse_loss(orig: np.ndarray, reconstructed: np.ndarray):
    """Mean over all elements of the squared difference; returns
    (loss, gradient w.r.t. reconstructed)."""
    orig = as_matrix(orig, "orig")
    recon = as_matrix(reconstructed, "reconstructed")
    if orig.shape != recon.shape:
        raise ShapeError(f"shape mismatch {orig.shape} vs {recon.shape}")
    diff = recon - orig
    loss = float(np.mean(diff**2))
    grad = 2.0 * diff / diff.size
    return loss, grad


def joint_loss(cse: float, mse: float, cfg: LossConfig) -> float:
    """Weighted sum of the contrastive and reconstruction objectives."""
    return float(cse) + cfg.lambda_mse * float(mse)


def make_views(embeddings: np.ndarray, cfg: TrainConfig, rng: np.random.Generator,
               paired: Optional[ViewBatch] = None) -> ViewBatch:
    """Build a view batch: either pass through paired data read from file, or
    synthesize dropout views (components zeroed with probability p, survivors
    rescaled by 1/(1-p); negatives use the higher dropout_rate_neg)."""
    emb = as_matrix(embeddings, "embeddings")
    if cfg.pair_mode == "from_file":
        if paired is None:
            raise ValueError("pair_mode 'from_file' requires paired view data")
        return paired

    def _dropout(x, p):
        if p == 0:
            return x.copy()
        keep = rng.random(x.shape) >= p
        return x * keep / (1.0 - p)

    positive = _dropout(emb, cfg.dropout_rate_pos)
    negative = None
    if cfg.dropout_rate_neg is not None:
        negative = _dropout(emb, cfg.dropout_rate_neg)
    return ViewBatch(anchor=emb, positive=positive, negative=negative)


class Adam:
    """Standard Adam with bias correction over a named parameter dict."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        """In-place update; raises NumericError naming any non-finite gradient."""
        self.t += 1
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g**2
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class ShapingModel:
    """Compression head + noise spec + learned quantizer, with the frozen
    orthonormal lift used to compare the d-dim quantized output against the
    original D-dim embedding in the reconstruction term."""

    def __init__(self, head: CompressionHead, quantizer: N2uqQuantizer,
                 noise: NoiseSpec, lift: np.ndarray):
        self.head = head
        self.quantizer = quantizer
        self.noise = noise
        self.lift = as_matrix(lift, "lift")  # (d, D), orthonormal rows
        if self.lift.shape != (head.W.shape[1], head.W.shape[0]):
            raise ShapeError("lift must map d back to D")

    @classmethod
    def init(cls, corpus: np.ndarray, d: int, K: int, profile,
             sigma_g: float, rng: np.random.Generator,
             pca_init: bool = True) -> "ShapingModel":
        """Initialize from a calibration corpus.  The projection starts at the
        top-d principal directions by default (random otherwise); quantizer
        thresholds start equally spaced over the calibration percentile range."""
        corpus = as_matrix(corpus, "corpus")
        D = corpus.shape[1]
        if pca_init:
            from .baselines import pca_fit
            pca = pca_fit(corpus, d)
            head = CompressionHead(pca.components.copy(), -pca.mean @ pca.components)
            # frozen orthonormal lift R^d -> R^D: the matching decoder rows
            lift = pca.components.T.copy()
        else:
            head = CompressionHead.init_random(D, d, rng)
            # frozen random orthonormal lift (QR of a Gaussian draw)
            q, _ = np.linalg.qr(rng.standard_normal((D, d)))
            lift = q.T
        compressed = head.forward(corpus)
        quant = N2uqQuantizer.from_calibration(compressed, K)
        noise = NoiseSpec(profile=profile, sigma_g=sigma_g)
        return cls(head, quant, noise, lift)

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"W": self.head.W, "b": self.head.b, "t": self.quantizer.t}

    def forward_train(self, x: np.ndarray, rng: np.random.Generator):
        """Full pipeline with noise injection; returns the straight-through
        surrogate output and the cache needed for backward."""
        compressed = self.head.forward(x)
        noisy = inject_noise(compressed, self.noise, rng)
        codes, y = self.quantizer.forward(noisy)
        surrogate = self.quantizer.surrogate(noisy)
        cache = {"x": x, "noisy": noisy, "quant_cache": self.quantizer._cache}
        return surrogate, cache

    def backward_train(self, grad_out: np.ndarray, cache) -> Dict[str, np.ndarray]:
        """Backprop grad w.r.t. the surrogate output into parameter grads;
        noise is a constant additive term so its backward is the identity."""
        grad_noisy, grad_t = self.quantizer.backward(grad_out, cache["quant_cache"])
        grad_W, grad_b, _ = self.head.backward(grad_noisy, cache["x"])
        return {"W": grad_W, "b": grad_b, "t": grad_t}

    def shape(self, x: np.ndarray):
        """Inference path (no noise): compress then quantize.  Returns
        (codes, dequantized values)."""
        return self.quantizer.forward(self.head.forward(x))

    def compress(self, x: np.ndarray) -> np.ndarray:
        return self.head.forward(x)

    @property
    def recon_span(self) -> float:
        return float(self.quantizer.range_hi - self.quantizer.range_lo)

    def reconstruct(self, y: np.ndarray) -> np.ndarray:
        """Map quantizer output levels back to compressed values (through the
        quantizer's fixed calibration range) and lift to the original space."""
        z = self.quantizer.range_lo + np.asarray(y, dtype=np.float64) * self.recon_span
        return z @ self.lift

    def reconstruction_mse(self, x: np.ndarray) -> float:
        """Dequantized-output reconstruction error against the original
        embeddings, through the frozen lift."""
        _, y = self.shape(x)
        loss, _ = mse_loss(x, self.reconstruct(y))
        return loss


def train(corpus: np.ndarray, model: ShapingModel, cfg: TrainConfig,
          loss_cfg: Optional[LossConfig] = None,
          paired: Optional[ViewBatch] = None):
    """Run the end-to-end loop: views -> compress -> noise -> quantize ->
    joint loss -> backward -> Adam (with threshold re-projection).

    Returns the per-epoch mean joint loss.  Bit-reproducible given
    (seed, config, corpus)."""
    corpus = as_matrix(corpus, "corpus")
    if corpus.shape[0] == 0:
        raise ValueError("corpus must be nonempty")
    loss_cfg = loss_cfg or LossConfig()
    rng = make_rng(cfg.seed)
    opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    model.noise.sigma_g = cfg.sigma_g
    n = corpus.shape[0]
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if paired is not None and cfg.pair_mode == "from_file":
                batch = ViewBatch(paired.anchor[idx], paired.positive[idx],
                                  None if paired.negative is None else paired.negative[idx])
            else:
                batch = make_views(corpus[idx], cfg, rng)
            out_a, cache_a = model.forward_train(batch.anchor, rng)
            out_p, cache_p = model.forward_train(batch.positive, rng)
            out_n = cache_n = None
            if batch.negative is not None:
                out_n, cache_n = model.forward_train(batch.negative, rng)
            cse, g_a, g_p, g_n = contrastive_loss(
                out_a, out_p, out_n, temperature=loss_cfg.temperature)
            mse, g_recon = mse_loss(batch.anchor, model.reconstruct(out_a))
            total = joint_loss(cse, mse, loss_cfg)
            if not np.isfinite(total):
                raise NumericError(
                    f"loss became non-finite at epoch {epoch}, batch start {start}")
            g_a = g_a + loss_cfg.lambda_mse * model.recon_span * (g_recon @ model.lift.T)
            grads = model.backward_train(g_a, cache_a)
            for k, v in model.backward_train(g_p, cache_p).items():
                grads[k] = grads[k] + v
            if g_n is not None:
                for k, v in model.backward_train(g_n, cache_n).items():
                    grads[k] = grads[k] + v
            opt.step(model.parameters(), grads)
            model.quantizer.project_thresholds()
            epoch_losses.append(total)
        curve.append(float(np.mean(epoch_losses)))
    return curve
