"""Dense float64 kernels shared by the model, the risk estimator and the tests.

Everything here is a pure function over numpy arrays. Matrices are plain
2-D ``float64`` arrays (row-major), probability vectors are 1-D arrays.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "InvalidInputError",
    "ShapeError",
    "as_matrix",
    "softmax",
    "causal_softmax",
    "log_softmax",
    "matmul",
    "layer_norm",
    "safe_log",
    "argmax",
]


class InvalidInputError(ValueError):
    """Raised when a kernel receives non-finite or empty input."""


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``data`` into a finite 2-D float64 array.

    If ``rows``/``cols`` are given, ``data`` may be a flat row-major sequence.
    """
    arr = np.asarray(data, dtype=np.float64)
    if rows is not None and cols is not None:
        if arr.size != rows * cols:
            raise ShapeError(f"expected {rows * cols} values for a {rows}x{cols} matrix, got {arr.size}")
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("matrix contains non-finite values")
    return arr


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax along ``axis``.

    Raises InvalidInputError on empty or non-finite input.
    """
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0:
        raise InvalidInputError("softmax of an empty vector")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("softmax input contains non-finite values")
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def causal_softmax(scores: np.ndarray) -> np.ndarray:
    """Row softmax over ``(..., n, n)`` scores with key ``j > i`` masked out.

    Masked entries get exactly zero weight; no ``-inf`` is ever materialised.
    """
    s = np.asarray(scores, dtype=np.float64)
    n = s.shape[-1]
    keep = np.tril(np.ones((n, n), dtype=bool))
    if not np.all(np.isfinite(s[..., keep])):
        raise InvalidInputError("attention scores contain non-finite values")
    row_max = np.where(keep, s, -np.inf).max(axis=-1, keepdims=True)
    e = np.where(keep, np.exp(np.where(keep, s - row_max, 0.0)), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise InvalidInputError("log_softmax needs non-empty finite input")
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check.

    Backed by numpy; on a fixed build and thread count the result is
    bit-reproducible for identical inputs.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def layer_norm(x, eps: float = 1e-5, gain=None, bias=None) -> np.ndarray:
    """Normalise the last axis to zero mean and unit variance.

    ``eps`` is added to the variance, so constant input maps to zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 0:
        raise InvalidInputError("layer_norm of an empty vector")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    denom = np.sqrt(var + eps)
    out = np.divide(xc, denom, out=np.zeros_like(xc), where=denom > 0)
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def safe_log(p) -> np.ndarray:
    """Natural log with ``log(0) := 0`` so that ``p * safe_log(p)`` is 0 at p = 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    np.log(p, out=out, where=p > 0)
    return out


def argmax(x) -> int:
    """Index of the maximum, lowest index on ties."""
    return int(np.argmax(np.asarray(x)))
