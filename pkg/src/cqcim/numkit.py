"""Dense numeric kernels, seeded randomness, and a finite-difference gradient oracle.

All learnable modules in this package are validated against
:func:`finite_diff_grad`.  Everything runs in 64-bit floats; file I/O
elsewhere uses 32-bit.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class ShapeError(ValueError):
    """Dimension mismatch between operands."""


class NumericError(ArithmeticError):
    """A numeric quantity became non-finite where it must not."""


def make_rng(seed: int) -> np.random.Generator:
    """Explicitly seeded generator (PCG64): identical seeds give identical
    draw sequences across runs and platforms.  OS entropy is never used in
    library paths."""
    return np.random.default_rng(int(seed))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate a 2-D float64 matrix with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite values")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit shape checking."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericError("matmul produced non-finite values")
    return out


def gaussian(rng: np.random.Generator, mean: float, sigma: float, n: int) -> np.ndarray:
    """n i.i.d. draws from N(mean, sigma^2); sigma == 0 returns the constant mean."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.full(n, float(mean))
    return rng.normal(mean, sigma, size=n)


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a parameter vector.

    grad_i = (f(x + h e_i) - f(x - h e_i)) / (2 h)
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        step = np.zeros_like(flat)
        step[i] = h
        fp = f((flat + step).reshape(x.shape))
        fm = f((flat - step).reshape(x.shape))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at component {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(1e-12, |a|+|b|) over components; used by gradient checks."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-12)
    return float(np.max(np.abs(a - b) / denom))
