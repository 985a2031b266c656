"""Forward pass of one frozen pre-norm ViT block with 2D (or 3D) rotary embedding."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np
from scipy.special import erf

from .errors import ShapeMismatch, UnsupportedHeadDim
from .tensor import DTYPE, as_tensor, linear, matmul

LN_EPS = 1e-6
ROPE_BASE = 100.0


@dataclass(frozen=True)
class BlockWeights:
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    qkv_weight: np.ndarray
    qkv_bias: np.ndarray
    proj_weight: np.ndarray
    proj_bias: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    fc1_weight: np.ndarray
    fc1_bias: np.ndarray
    fc2_weight: np.ndarray
    fc2_bias: np.ndarray
    num_heads: int
    ls1_gamma: Optional[np.ndarray] = field(default=None)
    ls2_gamma: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        c = self.qkv_weight.shape[1] if self.qkv_weight.ndim == 2 else -1
        for f in fields(self):
            if f.name == "num_heads":
                continue
            value = getattr(self, f.name)
            if value is None:
                # layer-scale defaults to ones when absent
                value = np.ones(max(c, 1), dtype=DTYPE)
            t = as_tensor(value)
            t.setflags(write=False)
            object.__setattr__(self, f.name, t)
        self._validate()

    def _validate(self):
        c = self.channels
        hidden = self.fc1_weight.shape[0] if self.fc1_weight.ndim == 2 else -1
        expected = {
            "ln1_gamma": (c,), "ln1_beta": (c,),
            "qkv_weight": (3 * c, c), "qkv_bias": (3 * c,),
            "proj_weight": (c, c), "proj_bias": (c,),
            "ls1_gamma": (c,), "ls2_gamma": (c,),
            "ln2_gamma": (c,), "ln2_beta": (c,),
            "fc1_weight": (hidden, c), "fc1_bias": (hidden,),
            "fc2_weight": (c, hidden), "fc2_bias": (c,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name}: expected {shape}, got {getattr(self, name).shape}")
        if self.num_heads < 1 or c % self.num_heads:
            raise ShapeMismatch(f"{self.num_heads} heads do not divide {c} channels")
        if self.head_dim % 2:
            raise UnsupportedHeadDim(f"per-head dim {self.head_dim} must be even")

    @property
    def channels(self) -> int:
        return self.qkv_weight.shape[1]

    @property
    def head_dim(self) -> int:
        return self.channels // self.num_heads

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "num_heads"}


@dataclass(frozen=True)
class RopeCoords:
    """Per-token rotary positions.

    ``coords`` is ``[N, A]`` with one column per spatial axis (A=2 for plane
    tokens as (y, x), A=3 for flattened volumes as (d, h, w)); ``mask`` marks
    the tokens that get rotated.
    """

    coords: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if coords.ndim != 2 or mask.shape != (coords.shape[0],):
            raise ShapeMismatch(f"coords {coords.shape} and mask {mask.shape} disagree")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "mask", mask)

    def __len__(self):
        return self.coords.shape[0]

    @property
    def num_axes(self) -> int:
        return self.coords.shape[1]


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    if x.shape[-1] != gamma.shape[-1] or gamma.shape != beta.shape:
        raise ShapeMismatch(f"layer_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    x64 = np.asarray(x, dtype=np.float64)
    mean = x64.sum(axis=-1, keepdims=True) / x.shape[-1]
    centered = x64 - mean
    var = (centered * centered).sum(axis=-1, keepdims=True) / x.shape[-1]
    normed = centered / np.sqrt(var + LN_EPS)
    return (normed * gamma + beta).astype(DTYPE)


def rope_angles(head_dim: int, coords: RopeCoords, base: float = ROPE_BASE) -> np.ndarray:
    """Angles ``[N, head_dim // 2]``; pair block ``a`` follows axis ``a`` of the coords."""
    n_axes = coords.num_axes
    if head_dim % (2 * n_axes):
        raise UnsupportedHeadDim(
            f"per-head dim {head_dim} cannot be split over {n_axes} rotary axes"
        )
    per_axis = head_dim // (2 * n_axes)
    freqs = base ** (-2.0 * n_axes * np.arange(per_axis) / head_dim)
    angles = np.concatenate(
        [coords.coords[:, a, None] * freqs[None, :] for a in range(n_axes)], axis=1
    )
    angles[~coords.mask] = 0.0
    return angles


def rope_rotate(qk: np.ndarray, coords: RopeCoords, base: float = ROPE_BASE) -> np.ndarray:
    """Rotate channel pairs ``(i, i + head_dim/2)`` of ``qk[..., N, head_dim]``.

    With two coordinate axes the first quarter of the channels (and its
    partner quarter) turns with y and the second with x, at frequencies
    ``base ** (-4 j / head_dim)``. Unmasked tokens are copied untouched.
    """
    n, head_dim = qk.shape[-2], qk.shape[-1]
    if n != len(coords):
        raise ShapeMismatch(f"rope: {n} tokens but {len(coords)} coordinates")
    if head_dim % 2:
        raise UnsupportedHeadDim(f"per-head dim {head_dim} must be even")
    angles = rope_angles(head_dim, coords, base)
    cos, sin = np.cos(angles), np.sin(angles)
    half = head_dim // 2
    x64 = np.asarray(qk, dtype=np.float64)
    a, b = x64[..., :half], x64[..., half:]
    rotated = np.concatenate([cos * a - sin * b, sin * a + cos * b], axis=-1).astype(DTYPE)
    return np.where(coords.mask[:, None], rotated, qk).astype(DTYPE)


def softmax(scores: np.ndarray) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def mhsa(
    x: np.ndarray,
    w: BlockWeights,
    coords: RopeCoords,
    on_attention: Optional[Callable[[np.ndarray], None]] = None,
) -> np.ndarray:
    """Multi-head self-attention over ``x[..., N, C]``.

    ``on_attention`` (debug hook) receives the float64 softmax matrix
    ``[..., heads, N, N]``.
    """
    n, c = x.shape[-2], x.shape[-1]
    if c != w.channels:
        raise ShapeMismatch(f"mhsa: token dim {c} != block channels {w.channels}")
    if n != len(coords):
        raise ShapeMismatch(f"mhsa: {n} tokens but {len(coords)} coordinates")
    h, dh = w.num_heads, w.head_dim
    lead = x.shape[:-2]

    qkv = linear(x, w.qkv_weight, w.qkv_bias)

    def heads(t):
        # [..., N, C] -> [..., H, N, dh]
        return np.ascontiguousarray(np.swapaxes(t.reshape(lead + (n, h, dh)), -2, -3))

    q = rope_rotate(heads(qkv[..., :c]), coords)
    k = rope_rotate(heads(qkv[..., c : 2 * c]), coords)
    v = heads(qkv[..., 2 * c :])

    scale = 1.0 / np.sqrt(dh)
    probs = softmax(matmul(q, np.swapaxes(k, -1, -2)).astype(np.float64) * scale)
    if on_attention is not None:
        on_attention(probs)
    out = matmul(probs, v)
    out = np.swapaxes(out, -2, -3).reshape(lead + (n, c))
    return linear(out, w.proj_weight, w.proj_bias)


def gelu(x: np.ndarray) -> np.ndarray:
    x64 = np.asarray(x, dtype=np.float64)
    return (0.5 * x64 * (1.0 + erf(x64 / np.sqrt(2.0)))).astype(DTYPE)


def mlp(x: np.ndarray, w: BlockWeights) -> np.ndarray:
    return linear(gelu(linear(x, w.fc1_weight, w.fc1_bias)), w.fc2_weight, w.fc2_bias)


def block_forward(x: np.ndarray, w: BlockWeights, coords: RopeCoords, on_attention=None) -> np.ndarray:
    x = as_tensor(x, check=False)
    x = x + w.ls1_gamma * mhsa(layer_norm(x, w.ln1_gamma, w.ln1_beta), w, coords, on_attention)
    return x + w.ls2_gamma * mlp(layer_norm(x, w.ln2_gamma, w.ln2_beta), w)
