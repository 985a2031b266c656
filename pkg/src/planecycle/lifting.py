"""Network-level lifting: patch embedding, plane schedules and the three forward modes."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .errors import IndivisibleExtent, InvalidSchedule, ShapeMismatch
from .plane import PlaneAxis, PoolMode, apply_block, grid_coords, plane_cycle_step, run_plane
from .tensor import DTYPE, as_tensor, linear
from .vit import BlockWeights, layer_norm

PATCH = 16
NUM_REGISTERS = 4
CYCLE = (PlaneAxis.HW, PlaneAxis.DW, PlaneAxis.DH, PlaneAxis.HW)


class LiftMode(enum.Enum):
    SLICE2D = "2d"
    FLAT3D = "3d"
    PCM = "pcm"
    PCG = "pcg"

    @property
    def pool(self) -> Optional[PoolMode]:
        return {LiftMode.PCM: PoolMode.PCM, LiftMode.PCG: PoolMode.PCG}.get(self)

    @property
    def is_plane_cycle(self) -> bool:
        return self.pool is not None


@dataclass(frozen=True)
class NetworkWeights:
    patch_weight: np.ndarray  # [C, in_ch, 16, 16]
    patch_bias: np.ndarray
    cls_token: np.ndarray  # [1, C]
    register_tokens: np.ndarray  # [4, C]
    blocks: tuple
    norm_gamma: np.ndarray
    norm_beta: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            if f.name == "blocks":
                continue
            t = as_tensor(getattr(self, f.name))
            t.setflags(write=False)
            object.__setattr__(self, f.name, t)
        object.__setattr__(self, "blocks", tuple(self.blocks))
        c = self.channels
        if self.patch_weight.ndim != 4 or self.patch_weight.shape[2:] != (PATCH, PATCH):
            raise ShapeMismatch(f"patch_weight must be [C, in_ch, 16, 16], got {self.patch_weight.shape}")
        for name, shape in [
            ("patch_bias", (c,)),
            ("cls_token", (1, c)),
            ("register_tokens", (NUM_REGISTERS, c)),
            ("norm_gamma", (c,)),
            ("norm_beta", (c,)),
        ]:
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name}: expected {shape}, got {getattr(self, name).shape}")
        if not self.blocks:
            raise ShapeMismatch("network needs at least one block")
        heads = self.blocks[0].num_heads
        for i, b in enumerate(self.blocks):
            if b.channels != c or b.num_heads != heads:
                raise ShapeMismatch(f"block {i} has C={b.channels}, heads={b.num_heads}")

    @property
    def channels(self) -> int:
        return self.patch_weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.patch_weight.shape[1]

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def num_heads(self) -> int:
        return self.blocks[0].num_heads

    @property
    def num_globals(self) -> int:
        return 1 + self.register_tokens.shape[0]

    def learned_globals(self) -> np.ndarray:
        return np.concatenate([self.cls_token, self.register_tokens], axis=0)

    def tensors(self) -> dict[str, np.ndarray]:
        out = {
            f.name: getattr(self, f.name) for f in fields(self) if f.name != "blocks"
        }
        for i, b in enumerate(self.blocks):
            out.update({f"blocks.{i}.{k}": t for k, t in b.tensors().items()})
        return out


def weights_checksum(w: NetworkWeights) -> str:
    h = hashlib.sha256()
    for name, t in sorted(w.tensors().items()):
        h.update(name.encode())
        h.update(str(t.shape).encode())
        h.update(np.ascontiguousarray(t).tobytes())
    return h.hexdigest()


def patch_embed_volume(raw: np.ndarray, w: NetworkWeights) -> tuple[np.ndarray, np.ndarray]:
    """Embed each axial slice of ``raw[D0, H0, W0, in_ch]`` with the 2D patch projection."""
    raw = as_tensor(raw)
    if raw.ndim != 4 or raw.shape[3] != w.in_channels:
        raise ShapeMismatch(f"expected [D0, H0, W0, {w.in_channels}] volume, got {raw.shape}")
    d0, h0, w0, cin = raw.shape
    if h0 % PATCH or w0 % PATCH:
        raise IndivisibleExtent(f"H0={h0} and W0={w0} must be divisible by {PATCH}")
    hp, wp = h0 // PATCH, w0 // PATCH
    # [D0, Hp, ky, Wp, kx, in] -> [D0, Hp, Wp, in, ky, kx] to match the weight layout
    patches = raw.reshape(d0, hp, PATCH, wp, PATCH, cin).transpose(0, 1, 3, 5, 2, 4)
    patches = np.ascontiguousarray(patches).reshape(d0 * hp * wp, cin * PATCH * PATCH)
    kernel = w.patch_weight.reshape(w.channels, -1)
    feats = linear(patches, kernel, w.patch_bias).reshape(d0, hp, wp, w.channels)
    globals_ = np.ascontiguousarray(
        np.broadcast_to(w.learned_globals(), (d0, w.num_globals, w.channels))
    )
    return feats, globals_


def build_cycle_schedule(depth: int) -> list[PlaneAxis]:
    """[HW, DW, DH, HW] repeated, truncated at ``depth``."""
    if depth < 1:
        raise InvalidSchedule(f"depth must be >= 1, got {depth}")
    return [CYCLE[i % len(CYCLE)] for i in range(depth)]


def parse_schedule(text: str, depth: int) -> list[PlaneAxis]:
    """Parse ``"hw,dw,dh,hw"``; a shorter pattern repeats up to ``depth``."""
    pattern = [PlaneAxis.parse(tok) for tok in text.split(",") if tok.strip()]
    if not pattern:
        raise InvalidSchedule(f"empty schedule {text!r}")
    if len(pattern) > depth:
        raise InvalidSchedule(f"schedule has {len(pattern)} planes for {depth} blocks")
    return [pattern[i % len(pattern)] for i in range(depth)]


def _final_norm(x: np.ndarray, w: NetworkWeights) -> np.ndarray:
    return layer_norm(x, w.norm_gamma, w.norm_beta)


def forward(
    raw: np.ndarray,
    w: NetworkWeights,
    mode: LiftMode = LiftMode.PCG,
    schedule: Optional[Sequence[PlaneAxis]] = None,
    threads: int = 1,
    trace: Optional[list] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lift a raw volume. Returns ``(features [D,H,W,C], globals [P',g,C])``.

    ``schedule`` is only used by the PlaneCycle modes and defaults to the
    four-plane cycle. ``trace`` collects ``(plane, sequences, length)`` per block.
    """
    v, g = patch_embed_volume(raw, w)
    dims = v.shape[:3]

    if mode is LiftMode.SLICE2D:
        for blk in w.blocks:
            v, g = run_plane(v, g, blk, PlaneAxis.HW, threads, trace)

    elif mode is LiftMode.FLAT3D:
        n_glob = w.num_globals
        seq = np.concatenate([w.learned_globals(), v.reshape(-1, w.channels)], axis=0)[None]
        coords = grid_coords(dims, n_glob)
        for blk in w.blocks:
            if trace is not None:
                trace.append((None, 1, seq.shape[1]))
            seq = apply_block(seq, blk, coords, threads)
        g = np.ascontiguousarray(seq[:, :n_glob])
        v = np.ascontiguousarray(seq[0, n_glob:]).reshape(dims + (w.channels,))

    else:
        schedule = list(schedule) if schedule is not None else build_cycle_schedule(w.depth)
        if len(schedule) != w.depth:
            raise InvalidSchedule(f"schedule length {len(schedule)} != depth {w.depth}")
        for blk, plane in zip(w.blocks, schedule):
            v, g = plane_cycle_step(v, g, blk, plane, mode.pool, threads, trace)

    return _final_norm(v, w), _final_norm(g, w)


def extract_global_summary(g: np.ndarray) -> np.ndarray:
    """Mean CLS token (index 0) over the slices of ``g[P', g, C]``."""
    return np.mean(np.asarray(g[:, 0, :], dtype=np.float64), axis=0).astype(DTYPE)


class LiftingEngine:
    """Read-only wrapper around frozen weights; holds no tensors of its own."""

    def __init__(self, weights: NetworkWeights, threads: int = 1):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        self.weights = weights
        self.threads = threads

    def registered_tensors(self) -> dict[str, np.ndarray]:
        return self.weights.tensors()

    def forward(self, raw, mode: LiftMode = LiftMode.PCG, schedule=None, trace=None):
        return forward(raw, self.weights, mode, schedule, self.threads, trace)
