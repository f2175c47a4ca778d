"""Embedding shaping pipeline: compression head, level-aware device-noise
injection, and quantizers (learned non-uniform-to-uniform plus fixed low-bit
variants).  Every learnable piece provides forward and analytic backward."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numkit import NumericError, ShapeError, as_matrix

# minimum kept between adjacent quantizer thresholds after re-projection
MIN_THRESHOLD_GAP = 1e-6


class CompressionHead:
    """Dense projection x @ W + b mapping D_in -> d_out (d_out <= D_in)."""

    def __init__(self, W: np.ndarray, b: np.ndarray):
        W = as_matrix(W, "W")
        b = np.asarray(b, dtype=np.float64).ravel()
        if b.size != W.shape[1]:
            raise ShapeError(f"bias length {b.size} != output dim {W.shape[1]}")
        if W.shape[1] > W.shape[0]:
            raise ValueError("compression head must not expand dimensionality")
        self.W = W
        self.b = b
        self._cache: Optional[np.ndarray] = None

    @classmethod
    def init_random(cls, d_in: int, d_out: int, rng: np.random.Generator) -> "CompressionHead":
        W = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_out))
        return cls(W, np.zeros(d_out))

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_matrix(x, "x")
        if x.shape[1] != self.W.shape[0]:
            raise ShapeError(f"input dim {x.shape[1]} != W rows {self.W.shape[0]}")
        self._cache = x
        return x @ self.W + self.b

    def backward(self, grad_out: np.ndarray, x: Optional[np.ndarray] = None):
        """Gradients of the cached forward: (grad_W, grad_b, grad_x).

        `x` may be passed explicitly when several batches are in flight."""
        if x is None:
            x = self._cache
        if x is None:
            raise RuntimeError("backward called before forward")
        grad_out = as_matrix(grad_out, "grad_out")
        if grad_out.shape != (x.shape[0], self.W.shape[1]):
            raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward")
        grad_W = x.T @ grad_out
        grad_b = grad_out.sum(axis=0)
        grad_x = grad_out @ self.W.T
        return grad_W, grad_b, grad_x


def find_level(value, lookup_thresholds) -> np.ndarray:
    """Level index of `value` given sorted thresholds: the count of thresholds
    at or below it (a value exactly on a threshold belongs to the upper level).
    Total function; vectorized over `value`."""
    t = np.asarray(lookup_thresholds, dtype=np.float64)
    return np.searchsorted(t, np.asarray(value, dtype=np.float64), side="right")


@dataclass
class NoiseSpec:
    """Level-aware device-noise configuration.

    `profile` carries per-level stdevs; `sigma_g` is the dimensionless global
    noise factor; `lookup_thresholds` (in [0,1], applied after per-batch
    min-max normalization) assign each component a device level.
    """

    profile: "object"  # cimsim.DeviceProfile; duck-typed to avoid a cycle
    sigma_g: float = 0.1
    lookup_thresholds: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sigma_g < 0:
            raise ValueError("sigma_g must be >= 0")
        K = int(self.profile.levels)
        if self.lookup_thresholds is None:
            # equally spaced interior points of [0,1]; K=4 gives {0.25,0.5,0.75}
            self.lookup_thresholds = np.linspace(0.0, 1.0, K + 1)[1:-1]
        self.lookup_thresholds = np.asarray(self.lookup_thresholds, dtype=np.float64)
        if self.lookup_thresholds.size != K - 1:
            raise ValueError(
                f"need {K - 1} lookup thresholds for a {K}-level profile, "
                f"got {self.lookup_thresholds.size}"
            )
        if np.any(np.diff(self.lookup_thresholds) <= 0):
            raise ValueError("lookup thresholds must be strictly increasing")


def inject_noise(emb: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Add level-dependent Gaussian noise scaled by the global factor.

    Each component is assigned a device level by thresholding its per-batch
    min-max-normalized value; the noise draw has that level's stdev, and the
    mask is scaled by sigma_g before addition.  sigma_g == 0 returns the input
    bit-exactly.  The backward pass is the identity (additive noise is a
    constant once drawn).
    """
    emb = as_matrix(emb, "emb")
    if spec.sigma_g == 0:
        return emb
    lo = emb.min()
    hi = emb.max()
    span = hi - lo
    if span <= 0:
        normalized = np.zeros_like(emb)
    else:
        normalized = (emb - lo) / span
    levels = find_level(normalized, spec.lookup_thresholds)
    sigma = np.asarray(spec.profile.sigma_v, dtype=np.float64)[levels]
    eps = rng.standard_normal(emb.shape) * sigma
    return emb + spec.sigma_g * eps


class N2uqQuantizer:
    """Non-uniform-to-uniform quantizer: learnable strictly increasing input
    thresholds, uniformly spaced output levels, straight-through rounding.

    The warp g maps the segment between adjacent thresholds affinely onto a
    unit code interval; codes are round-half-up of clamp(g, 0, K-1) and the
    emitted value is out_levels[code].  The backward pass differentiates the
    continuous surrogate (linear interpolation of out_levels at clamp(g)).
    """

    def __init__(self, K: int, t: np.ndarray, range_lo: float, range_hi: float,
                 out_levels: Optional[np.ndarray] = None):
        if K < 2:
            raise ValueError("need at least 2 levels")
        t = np.asarray(t, dtype=np.float64).ravel()
        if t.size != K - 1:
            raise ValueError(f"need {K - 1} thresholds for K={K}")
        if not (range_lo < t[0] and t[-1] < range_hi):
            raise ValueError("thresholds must lie strictly inside (range_lo, range_hi)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        self.K = int(K)
        self.t = t
        self.range_lo = float(range_lo)
        self.range_hi = float(range_hi)
        if out_levels is None:
            out_levels = np.linspace(0.0, 1.0, K)
        self.out_levels = np.asarray(out_levels, dtype=np.float64)
        if self.out_levels.size != K:
            raise ValueError("out_levels must have K entries")
        self._cache = None

    @classmethod
    def from_calibration(cls, x: np.ndarray, K: int,
                         out_levels: Optional[np.ndarray] = None) -> "N2uqQuantizer":
        """Range endpoints at the 1st/99th percentile of a calibration batch,
        thresholds equally spaced between them."""
        x = np.asarray(x, dtype=np.float64)
        lo, hi = np.percentile(x, [1.0, 99.0])
        if hi - lo <= 0:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, K + 1)
        return cls(K, edges[1:-1], lo, hi, out_levels=out_levels)

    # -- geometry helpers ---------------------------------------------------

    def edges(self) -> np.ndarray:
        return np.concatenate([[self.range_lo], self.t, [self.range_hi]])

    def warp(self, x: np.ndarray):
        """Piecewise-linear warp g(x) and the segment index of each element.

        g maps [edge_j, edge_{j+1}] onto [j, j+1]; below/above the range g is
        clamped to 0 / K."""
        e = self.edges()
        x = np.asarray(x, dtype=np.float64)
        seg = np.clip(np.searchsorted(e, x, side="right") - 1, 0, self.K - 1)
        width = e[seg + 1] - e[seg]
        g = seg + (x - e[seg]) / width
        g = np.clip(g, 0.0, float(self.K))
        return g, seg

    def surrogate(self, x: np.ndarray) -> np.ndarray:
        """Continuous straight-through surrogate of the quantized output."""
        g, _ = self.warp(x)
        u = np.clip(g, 0.0, self.K - 1.0)
        return np.interp(u, np.arange(self.K), self.out_levels)

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray):
        """Returns (codes, y) with y = out_levels[codes]; caches for backward."""
        x = np.asarray(x, dtype=np.float64)
        g, seg = self.warp(x)
        u = np.clip(g, 0.0, self.K - 1.0)
        codes = np.minimum(np.floor(u + 0.5).astype(np.int64), self.K - 1)
        y = self.out_levels[codes]
        self._cache = (x, g, seg, u)
        return codes, y

    def backward(self, grad_y: np.ndarray, cache=None):
        """Gradients (grad_x, grad_t) of the straight-through surrogate.

        Zero outside [range_lo, range_hi] and wherever the code clamp is
        active; grad_t accumulates the two segments adjacent to each
        threshold."""
        if cache is None:
            cache = self._cache
        if cache is None:
            raise RuntimeError("backward called before forward")
        x, g, seg, u = cache
        grad_y = np.asarray(grad_y, dtype=np.float64)
        if grad_y.shape != x.shape:
            raise ShapeError("grad_y shape does not match forward input")
        e = self.edges()
        # slope of the out-level interpolation on each element's code interval
        m = np.clip(np.floor(u).astype(np.int64), 0, self.K - 2)
        s_out = self.out_levels[m + 1] - self.out_levels[m]
        width = e[seg + 1] - e[seg]
        # active where the surrogate actually varies with x
        active = (x >= self.range_lo) & (x <= self.range_hi) & (g > 0.0) & (g < self.K - 1.0)
        gy = grad_y * s_out * active
        grad_x = gy / width
        # d g / d edge_j = (x - e_{j+1}) / width^2 ; d g / d edge_{j+1} = -(x - e_j) / width^2
        contrib_lo = gy * (x - e[seg + 1]) / width**2
        contrib_hi = gy * -(x - e[seg]) / width**2
        grad_edges = np.zeros(self.K + 1)
        np.add.at(grad_edges, seg.ravel(), contrib_lo.ravel())
        np.add.at(grad_edges, seg.ravel() + 1, contrib_hi.ravel())
        grad_t = grad_edges[1:self.K]  # range endpoints are not learnable
        return grad_x, grad_t

    def project_thresholds(self):
        """Re-impose strict ordering inside (range_lo, range_hi) after an
        optimizer step."""
        lo = self.range_lo + MIN_THRESHOLD_GAP
        hi = self.range_hi - MIN_THRESHOLD_GAP
        t = np.clip(self.t, lo, hi)
        for i in range(1, t.size):
            if t[i] <= t[i - 1] + MIN_THRESHOLD_GAP:
                t[i] = t[i - 1] + MIN_THRESHOLD_GAP
        self.t = np.minimum(t, hi)
        for i in range(t.size - 2, -1, -1):
            if self.t[i] >= self.t[i + 1] - MIN_THRESHOLD_GAP:
                self.t[i] = self.t[i + 1] - MIN_THRESHOLD_GAP


FIXED_MODES = {
    "binary_1bit": 2,
    "ternary_1p58bit": 3,
    "uniform_2bit": 4,
    "uniform_int4": 16,
}


@dataclass
class FixedQuantizer:
    """Non-learned quantizers used by the baselines: sign, ternary with a
    symmetric dead-zone, and uniform 4/16-level grids over [-scale, scale]."""

    mode: str
    scale: float = 1.0

    def __post_init__(self):
        if self.mode not in FIXED_MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {sorted(FIXED_MODES)}")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")

    @property
    def K(self) -> int:
        return FIXED_MODES[self.mode]

    def codebook(self) -> np.ndarray:
        if self.mode == "binary_1bit":
            return np.array([-1.0, 1.0]) * self.scale
        if self.mode == "ternary_1p58bit":
            return np.array([-1.0, 0.0, 1.0]) * self.scale
        return np.linspace(-self.scale, self.scale, self.K)

    def quantize(self, x: np.ndarray):
        """Returns (codes, y) with y drawn from the mode's codebook.  Values
        exactly on a decision boundary go to the upper code."""
        x = np.asarray(x, dtype=np.float64)
        levels = self.codebook()
        if self.mode == "binary_1bit":
            codes = (x >= 0).astype(np.int64)
        elif self.mode == "ternary_1p58bit":
            codes = np.ones_like(x, dtype=np.int64)
            codes[x < -0.5 * self.scale] = 0
            codes[x >= 0.5 * self.scale] = 2
        else:
            step = 2.0 * self.scale / (self.K - 1)
            codes = np.floor((np.clip(x, -self.scale, self.scale) + self.scale) / step + 0.5)
            codes = np.clip(codes, 0, self.K - 1).astype(np.int64)
        return codes, levels[codes]

    def ste_backward(self, x: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
        """Straight-through gradient: identity inside the clamp range."""
        x = np.asarray(x, dtype=np.float64)
        return np.asarray(grad_y, dtype=np.float64) * (np.abs(x) <= self.scale)
