"""Dense float64 linear algebra, seeded randomness, and a finite-difference
gradient oracle.

All tensors are plain numpy arrays: a Tensor2D is a C-contiguous float64
array of shape (rows, cols), a Tensor1D has shape (n,). Every public
operation is a pure function of its inputs; only Rng carries state.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ShapeError

Tensor1D = np.ndarray
Tensor2D = np.ndarray

# Guards the zero row in L2 normalization; far below any realistic norm.
DEFAULT_NORM_EPS = 1e-12

_U64 = 0xFFFFFFFFFFFFFFFF


def as_tensor2d(values) -> Tensor2D:
    """Coerce nested lists or arrays to a C-contiguous float64 matrix."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D tensor, got ndim={arr.ndim}")
    return arr


def as_tensor1d(values) -> Tensor1D:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D tensor, got ndim={arr.ndim}")
    return arr


def ensure_finite(arr: np.ndarray, context: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{context} contains non-finite entries")
    return arr


def matmul(a: Tensor2D, b: Tensor2D) -> Tensor2D:
    """Matrix product a @ b with an explicit inner-dimension check."""
    a = as_tensor2d(a)
    b = as_tensor2d(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.shape} x {b.shape}"
        )
    return a @ b


def l2_normalize_rows(m: Tensor2D, eps: float = DEFAULT_NORM_EPS) -> Tensor2D:
    """Divide each row by max(its Euclidean norm, eps).

    Rows whose norm is at most eps pass through scaled by 1/eps, so the
    all-zero row maps to itself.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = as_tensor2d(m)
    norms = np.sqrt(np.sum(m * m, axis=1, keepdims=True))
    return m / np.maximum(norms, eps)


def softmax_rows(z: Tensor2D) -> Tensor2D:
    """Row-wise softmax with max-subtraction for overflow safety."""
    z = as_tensor2d(z)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax(z: Tensor1D) -> Tensor1D:
    """Stable softmax of a single logit vector; output sums to 1."""
    z = as_tensor1d(z)
    return softmax_rows(z[None, :])[0]


def finite_diff_grad(
    loss_fn: Callable[[Tensor1D], float], params: Tensor1D, h: float
) -> Tensor1D:
    """Central-difference gradient estimate of a scalar loss.

    loss_fn must be deterministic and side-effect free; it is called twice
    per coordinate.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = as_tensor1d(params)
    grad = np.empty_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + h
        up = loss_fn(bumped)
        bumped[i] = params[i] - h
        down = loss_fn(bumped)
        grad[i] = (up - down) / (2.0 * h)
    return grad


class Rng:
    """Deterministic counter-based generator (Philox 4x64 with explicit keys).

    A stream is identified by the pair (seed, stream), used verbatim as the
    Philox key, so equal pairs produce bit-identical sample sequences on any
    platform. split(k) derives an independent child stream by shifting 16
    bits into the stream word; k must be in [1, 65535], which allows four
    levels of nesting before the word overflows.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _U64
        self.stream = int(stream) & _U64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, k: int) -> "Rng":
        if not 1 <= k < (1 << 16):
            raise ValueError("split index must be in [1, 65535]")
        return Rng(self.seed, ((self.stream << 16) | k) & _U64)

    def normal(self, rows: int, cols: int, scale: float = 1.0) -> Tensor2D:
        return self._gen.standard_normal((rows, cols)) * scale

    def normal_vector(self, n: int, scale: float = 1.0) -> Tensor1D:
        return self._gen.standard_normal(n) * scale

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"
