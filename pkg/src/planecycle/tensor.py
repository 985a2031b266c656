"""Dense float32 tensor substrate.

Tensors are plain C-contiguous ``np.float32`` arrays. The helpers here add
the shape checks and the fixed-order reductions the rest of the package
relies on for bit-exact reproducibility: every result depends only on the
values involved, never on batch size or thread count.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import InvalidLength, InvalidPermutation, NonFiniteValue, ShapeMismatch

DTYPE = np.float32


def as_tensor(x, check: bool = True) -> np.ndarray:
    """Return ``x`` as a C-contiguous float32 array; reject NaN/Inf when ``check``."""
    t = np.ascontiguousarray(x, dtype=DTYPE)
    if check and t.size and not np.isfinite(t).all():
        raise NonFiniteValue("tensor contains NaN or Inf")
    return t


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if any(d < 1 for d in dims):
        raise ShapeMismatch(f"all dims must be >= 1, got {dims}")
    return dims


def reshape(t: np.ndarray, new_shape: Sequence[int]) -> np.ndarray:
    dims = _check_shape(new_shape)
    if math.prod(dims) != t.size:
        raise ShapeMismatch(f"cannot reshape {t.shape} ({t.size} elements) to {dims}")
    return np.ascontiguousarray(t).reshape(dims)


def permute(t: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(t.ndim)):
        raise InvalidPermutation(f"{axes} is not a permutation of 0..{t.ndim - 1}")
    return np.ascontiguousarray(np.transpose(t, axes))


def inverse_permutation(axes: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(axes)
    for i, a in enumerate(axes):
        inv[a] = i
    return tuple(inv)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a[..., m, k] @ b[..., k, n]`` with ascending-k accumulation.

    Products and sums are carried in float64 and rounded to float32 once at
    the end. Each output element is built from elementwise numpy operations
    only, so it is identical whether computed alone or inside a batch.
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    a64 = np.asarray(a, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    out_shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + (a.shape[-2], b.shape[-1])
    acc = np.zeros(out_shape, dtype=np.float64)
    tmp = np.empty(out_shape, dtype=np.float64)
    for k in range(a.shape[-1]):
        np.multiply(a64[..., :, k, None], b64[..., None, k, :], out=tmp)
        acc += tmp
    return acc.astype(DTYPE)


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """``x @ weight.T + bias`` for a ``[out, in]`` weight matrix."""
    y = matmul(x, weight.T)
    if bias is not None:
        y = y + bias
    return y


def pool_bins(length: int, out_len: int) -> list[tuple[int, int]]:
    """Half-open row ranges ``[floor(i*L/P), ceil((i+1)*L/P))`` for each output row."""
    if length < 1 or out_len < 1:
        raise InvalidLength(f"adaptive pool needs L >= 1 and P >= 1, got L={length}, P={out_len}")
    return [
        ((i * length) // out_len, -((-(i + 1) * length) // out_len))
        for i in range(out_len)
    ]


def adaptive_avg_pool_1d(t: np.ndarray, out_len: int) -> np.ndarray:
    """Adaptive average pooling along axis 0 of ``t[L, ...]``.

    Rows inside a bin are summed in ascending order in float64, divided by the
    bin size and rounded to float32. Trailing axes are pooled independently.
    """
    if t.ndim < 1:
        raise ShapeMismatch("adaptive pool needs at least one axis")
    bins = pool_bins(t.shape[0], out_len)
    src = np.asarray(t, dtype=np.float64)
    out = np.empty((out_len,) + t.shape[1:], dtype=DTYPE)
    for i, (lo, hi) in enumerate(bins):
        acc = src[lo].copy()
        for r in range(lo + 1, hi):
            acc += src[r]
        out[i] = acc / (hi - lo)
    return out
