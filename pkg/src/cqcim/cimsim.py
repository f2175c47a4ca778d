"""Simulated multi-level compute-in-memory crossbar: device variation
profiles, read-out transition matrices, stochastic level flips, analog
max-inner-product scoring with array tiling, and an INT4 bit-slicing cost
model."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import ndtr

from .numkit import ShapeError, as_matrix


@dataclass
class DeviceProfile:
    """A device's distinguishable conductance levels with per-level Gaussian
    programming deviations (normalized conductance units)."""

    name: str
    levels: int
    sigma_v: np.ndarray   # (levels,)
    nominal: np.ndarray   # (levels,), strictly increasing

    def __post_init__(self):
        self.sigma_v = np.asarray(self.sigma_v, dtype=np.float64)
        self.nominal = np.asarray(self.nominal, dtype=np.float64)
        if self.sigma_v.size != self.levels:
            raise ValueError("sigma_v length must equal level count")
        if np.any(self.sigma_v < 0):
            raise ValueError("sigma_v entries must be >= 0")
        if self.nominal.size != self.levels or np.any(np.diff(self.nominal) <= 0):
            raise ValueError("nominal conductances must be strictly increasing")


def _profile(name, levels, sigma_v):
    nominal = np.linspace(0.0, 1.0, levels)
    return DeviceProfile(name=name, levels=levels, sigma_v=np.asarray(sigma_v),
                         nominal=nominal)


# Measured / extrapolated per-level deviations for the five built-in devices.
# The single-level RRAM row is treated as a binary on/off device with uniform
# deviation on both states.
PRESETS: Dict[str, DeviceProfile] = {
    "D-1": _profile("RRAM_1", 2, [0.0100, 0.0100]),
    "D-2": _profile("FeFET_2", 4, [0.0067, 0.0135, 0.0135, 0.0067]),
    "D-3": _profile("FeFET_3", 4, [0.0049, 0.0146, 0.0146, 0.0049]),
    "D-4": _profile("RRAM_4", 4, [0.0038, 0.0151, 0.0151, 0.0038]),
    "D-5": _profile("FeFET_6", 4, [0.0026, 0.0155, 0.0155, 0.0026]),
}


def profile_for_levels(profile: DeviceProfile, K: int) -> DeviceProfile:
    """Adapt a device profile to a K-level corpus by interpolating the
    per-level deviations over normalized level positions.  A 4-level row
    restricted to 2 levels keeps its outer-state deviations; expanding a
    binary row repeats its uniform deviation."""
    if K == profile.levels:
        return profile
    if K < 2:
        raise ValueError("need at least 2 levels")
    src = np.linspace(0.0, 1.0, profile.levels)
    dst = np.linspace(0.0, 1.0, K)
    sigma = np.interp(dst, src, profile.sigma_v)
    return DeviceProfile(name=f"{profile.name}@{K}", levels=K, sigma_v=sigma,
                         nominal=np.linspace(0.0, 1.0, K))


def load_profile(path: str) -> DeviceProfile:
    """Load a device profile from JSON: {"name", "levels", "sigma_v": [...]}.

    A "levels": 1 entry is interpreted as a binary on/off device.  An optional
    "nominal" list overrides the default equally spaced conductances."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    levels = int(doc["levels"])
    sigma = list(doc["sigma_v"])
    if levels == 1:
        levels = 2
        sigma = [sigma[0]] * 2
    sigma = sigma[:levels]
    nominal = doc.get("nominal")
    if nominal is None:
        nominal = np.linspace(0.0, 1.0, levels)
    return DeviceProfile(name=str(doc["name"]), levels=levels,
                         sigma_v=np.asarray(sigma, dtype=np.float64),
                         nominal=np.asarray(nominal, dtype=np.float64))


@dataclass
class ArraySpec:
    """Physical crossbar dimensions plus optional post-accumulation read
    noise on each tile output."""

    rows: int = 128
    cols: int = 128
    adc_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array dimensions must be positive")
        if self.adc_noise_sigma < 0:
            raise ValueError("adc_noise_sigma must be >= 0")


@dataclass
class QuantizedCorpus:
    """Integer level codes per document plus the map back to signed logical
    values: what gets programmed into the simulated crossbar."""

    codes: np.ndarray     # (N, d) ints in {0..K-1}
    dequant: np.ndarray   # (K,) level -> logical value
    K: int

    def __post_init__(self):
        self.codes = np.asarray(self.codes)
        self.dequant = np.asarray(self.dequant, dtype=np.float64)
        if self.dequant.size != self.K:
            raise ValueError("dequant map must have K entries")
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= self.K):
            raise ValueError("codes out of range for K levels")

    def dequantized(self) -> np.ndarray:
        return self.dequant[self.codes]


@dataclass
class TransitionMatrix:
    """Row-stochastic stored-level -> read-level flip probabilities."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        K = self.p.shape[0]
        if self.p.shape != (K, K):
            raise ValueError("transition matrix must be square")
        if np.any(self.p < 0) or np.any(self.p > 1):
            raise ValueError("entries must be probabilities")
        if np.max(np.abs(self.p.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("rows must sum to 1")

    @property
    def K(self) -> int:
        return self.p.shape[0]


def derive_transition_matrix(profile: DeviceProfile, noise_scale: float) -> TransitionMatrix:
    """Gaussian conductance-variation read-out model.

    A stored level i reads as N(nominal[i], (noise_scale * sigma_v[i])^2);
    sensing boundaries sit at midpoints of adjacent nominal conductances, with
    the outermost regions extending to +-inf.  Entry (i, j) is the Gaussian
    mass of level i in region j (error-function evaluation)."""
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    K = profile.levels
    if K < 2:
        raise ValueError("need at least 2 levels")
    bounds = (profile.nominal[:-1] + profile.nominal[1:]) / 2.0
    p = np.zeros((K, K))
    for i in range(K):
        s = noise_scale * profile.sigma_v[i]
        if s == 0:
            p[i, i] = 1.0
            continue
        cdf = ndtr((bounds - profile.nominal[i]) / s)
        upper = np.concatenate([cdf, [1.0]])
        lower = np.concatenate([[0.0], cdf])
        p[i] = upper - lower
    return TransitionMatrix(p=p)


def apply_flips(corpus: QuantizedCorpus, tm: TransitionMatrix,
                rng: np.random.Generator) -> QuantizedCorpus:
    """Resample every stored code independently from its transition-matrix
    row; deterministic given the generator state."""
    if tm.K != corpus.K:
        raise ValueError(f"transition matrix K={tm.K} != corpus K={corpus.K}")
    cum = np.cumsum(tm.p, axis=1)
    cum[:, -1] = 1.0
    r = rng.random(corpus.codes.shape)
    new_codes = (r[..., None] >= cum[corpus.codes]).sum(axis=-1)
    return QuantizedCorpus(codes=new_codes.astype(corpus.codes.dtype),
                           dequant=corpus.dequant, K=corpus.K)


def _affine_calibration(dequant: np.ndarray, nominal: np.ndarray):
    """Fit dequant[c] = a * nominal[c] + beta over the used level range.

    The simulated crossbar stores the nominal conductance of each code; a
    differential column pair realizes the signed logical value as a scaled
    conductance difference, which is exactly this affine map."""
    K = dequant.size
    g = nominal[:K]
    A = np.stack([g, np.ones(K)], axis=1)
    coef, residual, _, _ = np.linalg.lstsq(A, dequant, rcond=None)
    fit = A @ coef
    if np.max(np.abs(fit - dequant)) > 1e-9 * max(1.0, np.max(np.abs(dequant))):
        raise ValueError("dequantization map is not an affine function of the "
                         "device's nominal conductances")
    return float(coef[0]), float(coef[1])


def crossbar_mips(query: np.ndarray, corpus: QuantizedCorpus, spec: ArraySpec,
                  profile: DeviceProfile, noise_scale: float,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Analog inner-product scores of one query against the programmed corpus.

    Each cell's conductance is nominal[code] plus Gaussian programming noise;
    the d query components are split into ceil(d / spec.rows) wordline tiles
    whose bitline partial sums are accumulated digitally (optionally with ADC
    read noise per tile output).  Signed logical values are realized
    differentially, i.e. via the affine map from nominal conductance to
    dequantized value."""
    query = np.asarray(query, dtype=np.float64).ravel()
    n, d = corpus.codes.shape
    if query.size != d:
        raise ShapeError(f"query length {query.size} != corpus dim {d}")
    if corpus.K > profile.levels:
        raise ValueError(f"corpus has {corpus.K} levels but device supports "
                         f"{profile.levels}")
    if noise_scale > 0 or spec.adc_noise_sigma > 0:
        if rng is None:
            raise ValueError("rng required when noise is enabled")
    a, beta = _affine_calibration(corpus.dequant, profile.nominal)
    g = profile.nominal[corpus.codes]
    if noise_scale > 0:
        g = g + noise_scale * profile.sigma_v[corpus.codes] * rng.standard_normal(g.shape)
    acc = np.zeros(n)
    for start in range(0, d, spec.rows):
        tile = slice(start, min(start + spec.rows, d))
        partial = g[:, tile] @ query[tile]
        if spec.adc_noise_sigma > 0:
            partial = partial + spec.adc_noise_sigma * rng.standard_normal(n)
        acc += partial
    return a * acc + beta * query.sum()


def int4_slicing_cost(d: int, spec: ArraySpec, value_bits: int = 4,
                      cell_bits: int = 1) -> Dict[str, int]:
    """Analytic cost of storing `value_bits` values on `cell_bits` cells:
    bit slicing spreads each value over ceil(value_bits / cell_bits) cells
    whose partial sums must be shifted and stitched back per tile.  A 2-bit
    value on a 2-bit multi-level cell needs one cell and a single crossbar
    step."""
    if value_bits < 1 or cell_bits < 1:
        raise ValueError("bit widths must be positive")
    cells_per_value = math.ceil(value_bits / cell_bits)
    tiles = math.ceil(d * cells_per_value / spec.rows) if d > 0 else 0
    return {
        "cells_per_value": cells_per_value,
        "tiles": tiles,
        "accumulate_ops": cells_per_value * tiles,
    }
