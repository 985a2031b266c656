"""Plane-wise view of a ``D x H x W x C`` feature volume and the per-layer lifting step.

One step views the volume as ``P`` slices along the chosen axis, pools the
incoming global tokens to ``P`` rows, runs the frozen block once per slice on
``[globals, patch tokens]`` and writes the patch tokens back into the volume.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidSchedule, ShapeMismatch
from .tensor import adaptive_avg_pool_1d, as_tensor, inverse_permutation, permute, reshape
from .vit import BlockWeights, RopeCoords, block_forward

DEFAULT_NUM_GLOBALS = 5


class PlaneAxis(enum.Enum):
    """Slicing axis of the volume; the member name is the plane that is kept."""

    HW = 0  # slice along D (axial)
    DW = 1  # slice along H (coronal)
    DH = 2  # slice along W (sagittal)

    @property
    def axis(self) -> int:
        return self.value

    @property
    def in_plane_axes(self) -> tuple[int, int]:
        return tuple(a for a in range(3) if a != self.value)

    @property
    def layout(self) -> tuple[int, int, int, int]:
        """Axis permutation taking ``(D, H, W, C)`` to ``(P, a, b, C)``."""
        return (self.value,) + self.in_plane_axes + (3,)

    @classmethod
    def parse(cls, name: str) -> "PlaneAxis":
        key = name.strip().upper()
        aliases = {"HW": cls.HW, "D": cls.HW, "DW": cls.DW, "H": cls.DW, "DH": cls.DH, "W": cls.DH}
        if key not in aliases:
            raise InvalidSchedule(f"unknown plane {name!r}; expected hw, dw or dh")
        return aliases[key]


class PoolMode(enum.Enum):
    PCM = "pcm"  # mean over all slices, replicated
    PCG = "pcg"  # grouped adaptive average pooling


def reshape_to_plane(v: np.ndarray, p: PlaneAxis) -> np.ndarray:
    """``[D, H, W, C] -> [P, M, C]``; in-slice tokens keep canonical (D, H, W) order."""
    if v.ndim != 4:
        raise ShapeMismatch(f"expected a [D, H, W, C] volume, got {v.shape}")
    t = permute(v, p.layout)
    return reshape(t, (t.shape[0], t.shape[1] * t.shape[2], t.shape[3]))


def restore_from_plane(t: np.ndarray, p: PlaneAxis, dims: Sequence[int]) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or t.ndim != 3:
        raise ShapeMismatch(f"restore_from_plane: tensor {t.shape}, dims {dims}")
    a, b = p.in_plane_axes
    if t.shape[0] != dims[p.axis] or t.shape[1] != dims[a] * dims[b]:
        raise ShapeMismatch(f"plane tensor {t.shape} does not match dims {dims} on {p.name}")
    t = reshape(t, (dims[p.axis], dims[a], dims[b], t.shape[2]))
    return permute(t, inverse_permutation(p.layout))


def pool_global_tokens(g_in: np.ndarray, target_p: int, mode: PoolMode) -> np.ndarray:
    """Map ``[P', g, C]`` global tokens to ``[target_p, g, C]``.

    PCm pools to a single row and broadcasts it; PCg pools the slice axis
    adaptively. Token positions never mix.
    """
    if g_in.ndim != 3:
        raise ShapeMismatch(f"expected [P', g, C] global tokens, got {g_in.shape}")
    if mode is PoolMode.PCM:
        mean = adaptive_avg_pool_1d(g_in, 1)
        return np.ascontiguousarray(np.broadcast_to(mean, (target_p,) + g_in.shape[1:]))
    return adaptive_avg_pool_1d(g_in, target_p)


def _normalized_index(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(n) / (n - 1)


def grid_coords(extents: Sequence[int], num_globals: int) -> RopeCoords:
    """Row-major token grid coords in [-1, 1], preceded by ``num_globals`` unrotated entries."""
    axes = np.meshgrid(*[_normalized_index(n) for n in extents], indexing="ij")
    patch = np.stack([a.reshape(-1) for a in axes], axis=1)
    coords = np.concatenate([np.zeros((num_globals, len(extents))), patch], axis=0)
    mask = np.concatenate([np.zeros(num_globals, bool), np.ones(len(patch), bool)])
    return RopeCoords(coords, mask)


def coords_for_plane(p: PlaneAxis, dims: Sequence[int], g: int) -> RopeCoords:
    a, b = p.in_plane_axes
    return grid_coords((dims[a], dims[b]), g)


def apply_block(
    seqs: np.ndarray, w: BlockWeights, coords: RopeCoords, threads: int = 1
) -> np.ndarray:
    """Run the block on every sequence of ``seqs[S, N, C]``.

    Sequences are split into contiguous chunks across ``threads`` workers.
    Every op is row-local, so the result does not depend on the split.
    """
    if threads <= 1 or seqs.shape[0] == 1:
        return block_forward(seqs, w, coords)
    n = seqs.shape[0]
    step = -(-n // threads)
    chunks = [seqs[i : i + step] for i in range(0, n, step)]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda c: block_forward(c, w, coords), chunks))
    return np.concatenate(parts, axis=0)


def run_plane(
    v: np.ndarray,
    g: np.ndarray,
    w: BlockWeights,
    p: PlaneAxis,
    threads: int = 1,
    trace: Optional[list] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Block application on plane ``p`` with globals already at ``[P, g, C]``."""
    if v.shape[-1] != w.channels or g.shape[-1] != w.channels:
        raise ShapeMismatch(
            f"channel mismatch: volume {v.shape[-1]}, globals {g.shape[-1]}, block {w.channels}"
        )
    x = reshape_to_plane(v, p)
    if g.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"{g.shape[0]} global rows for {x.shape[0]} slices")
    n_glob = g.shape[1]
    seqs = np.concatenate([g, x], axis=1)
    if trace is not None:
        trace.append((p, seqs.shape[0], seqs.shape[1]))
    t = apply_block(seqs, w, coords_for_plane(p, v.shape[:3], n_glob), threads)
    return restore_from_plane(t[:, n_glob:], p, v.shape[:3]), np.ascontiguousarray(t[:, :n_glob])


def plane_cycle_step(
    v: np.ndarray,
    g_in: np.ndarray,
    w: BlockWeights,
    p: PlaneAxis,
    mode: PoolMode = PoolMode.PCG,
    threads: int = 1,
    trace: Optional[list] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One lifting step on plane ``p``. Returns ``(volume [D,H,W,C], globals [P,g,C])``.

    ``trace``, when given, collects ``(plane, sequence_count, sequence_length)``.
    """
    v = as_tensor(v)
    g = pool_global_tokens(as_tensor(g_in), v.shape[p.axis], mode)
    return run_plane(v, g, w, p, threads, trace)
