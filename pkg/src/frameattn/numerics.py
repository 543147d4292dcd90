"""Dense numeric primitives shared by the model, trainer, and tests.

Everything here operates on float64. Vectors are 1-d numpy arrays with at
least one entry, matrices are 2-d arrays with at least one row and column;
both must be entirely finite. The finite-difference gradient lives here so
the analytic backward pass elsewhere can be checked against an oracle that
never shares its code path.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DataError, DimensionError, NumericError

# Open-interval bounds for the logistic: in float64 the exact formula
# saturates to 0.0 / 1.0 for |x| beyond ~37, which would break the
# strictly-in-(0,1) guarantee downstream code relies on.
_SIGMOID_LO = np.nextafter(0.0, 1.0)
_SIGMOID_HI = np.nextafter(1.0, 0.0)


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Validate and convert to a finite 1-d float64 array of length >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-d, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a finite 2-d float64 array, rows/cols >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def sigmoid(x):
    """Numerically stable logistic, clamped into the open interval (0, 1).

    Branches so that exp never sees a positive argument; accepts scalars or
    arrays and returns the matching kind.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    np.clip(out, _SIGMOID_LO, _SIGMOID_HI, out=out)
    return float(out[0]) if scalar else out


def dot(a, b) -> float:
    """Inner product of two equal-length vectors, accumulated in float64."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    if va.shape[0] != vb.shape[0]:
        raise DimensionError(f"dot length mismatch: {va.shape[0]} vs {vb.shape[0]}")
    return float(np.dot(va, vb))


def concat(a, b) -> np.ndarray:
    """Concatenate two vectors, a's entries first."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    return np.concatenate([va, vb])


def softmax(logits) -> np.ndarray:
    """Softmax with max-subtraction stabilization."""
    z = as_vector(logits, "logits")
    shifted = z - np.max(z)
    ez = np.exp(shifted)
    return ez / np.sum(ez)


def softmax_cross_entropy(logits, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy loss of softmax(logits) against an integer label.

    Returns (loss, gradient) where gradient = softmax(logits) - onehot(label).
    The gradient entries sum to zero up to rounding.
    """
    z = as_vector(logits, "logits")
    if not 0 <= label < z.shape[0]:
        raise IndexError(f"label {label} out of range for {z.shape[0]} logits")
    shifted = z - np.max(z)
    logsumexp = float(np.log(np.sum(np.exp(shifted))))
    loss = logsumexp - float(shifted[label])
    grad = np.exp(shifted - logsumexp)
    grad[label] -= 1.0
    return loss, grad


def finite_diff_gradient(
    loss_fn: Callable[[np.ndarray], float],
    params,
    eps: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    Independent oracle for analytic gradients: (f(p + eps*e_j) - f(p - eps*e_j))
    / (2*eps) per coordinate. Raises NumericError if any probe evaluation is
    non-finite.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    p0 = as_vector(params, "params")
    grad = np.zeros_like(p0)
    for j in range(p0.shape[0]):
        probe = p0.copy()
        probe[j] = p0[j] + eps
        fplus = float(loss_fn(probe))
        probe[j] = p0[j] - eps
        fminus = float(loss_fn(probe))
        if not (np.isfinite(fplus) and np.isfinite(fminus)):
            raise NumericError(f"loss non-finite at finite-difference probe {j}")
        grad[j] = (fplus - fminus) / (2.0 * eps)
    return grad


def relative_error(a, b) -> float:
    """Max elementwise |a-b| / max(1e-8, |a|+|b|), the gradient-check metric."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(1e-8, np.abs(a) + np.abs(b))
    return float(np.max(np.abs(a - b) / denom))
