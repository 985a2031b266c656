"""Weight manifest (archive names <-> NetworkWeights) and seeded synthetic weights.

Archive naming scheme::

    patch_embed.proj.weight   [C, in_ch, 16, 16]
    patch_embed.proj.bias     [C]
    cls_token                 [1, C]
    register_tokens           [4, C]
    blocks.{i}.norm1.weight / .bias
    blocks.{i}.attn.qkv.weight [3C, C] / .bias
    blocks.{i}.attn.proj.weight [C, C] / .bias
    blocks.{i}.ls1.gamma      (optional, defaults to ones)
    blocks.{i}.norm2.weight / .bias
    blocks.{i}.mlp.fc1.weight [Ch, C] / .bias
    blocks.{i}.mlp.fc2.weight [C, Ch] / .bias
    blocks.{i}.ls2.gamma      (optional)
    norm.weight / norm.bias

Metadata keys: depth, channels, heads, patch, registers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .archive import Archive, read_archive, write_archive
from .errors import InvalidArch, MissingEntry, ShapeMismatch
from .lifting import NUM_REGISTERS, PATCH, NetworkWeights
from .vit import BlockWeights

BLOCK_NAMES = {
    "ln1_gamma": "norm1.weight",
    "ln1_beta": "norm1.bias",
    "qkv_weight": "attn.qkv.weight",
    "qkv_bias": "attn.qkv.bias",
    "proj_weight": "attn.proj.weight",
    "proj_bias": "attn.proj.bias",
    "ls1_gamma": "ls1.gamma",
    "ln2_gamma": "norm2.weight",
    "ln2_beta": "norm2.bias",
    "fc1_weight": "mlp.fc1.weight",
    "fc1_bias": "mlp.fc1.bias",
    "fc2_weight": "mlp.fc2.weight",
    "fc2_bias": "mlp.fc2.bias",
    "ls2_gamma": "ls2.gamma",
}
OPTIONAL_BLOCK_FIELDS = {"ls1_gamma", "ls2_gamma"}
NET_NAMES = {
    "patch_weight": "patch_embed.proj.weight",
    "patch_bias": "patch_embed.proj.bias",
    "cls_token": "cls_token",
    "register_tokens": "register_tokens",
    "norm_gamma": "norm.weight",
    "norm_beta": "norm.bias",
}


@dataclass(frozen=True)
class Arch:
    depth: int
    channels: int
    heads: int
    in_channels: int = 3
    mlp_ratio: int = 4

    def validate(self):
        if min(self.depth, self.channels, self.heads, self.in_channels, self.mlp_ratio) < 1:
            raise InvalidArch(f"all arch fields must be positive: {self}")
        if self.channels % self.heads:
            raise InvalidArch(f"{self.heads} heads do not divide {self.channels} channels")
        if (self.channels // self.heads) % 2:
            raise InvalidArch(f"per-head dim {self.channels // self.heads} must be even")


def weights_to_tensors(w: NetworkWeights) -> dict[str, np.ndarray]:
    out = {NET_NAMES[k]: getattr(w, k) for k in NET_NAMES}
    for i, blk in enumerate(w.blocks):
        for field_name, suffix in BLOCK_NAMES.items():
            out[f"blocks.{i}.{suffix}"] = getattr(blk, field_name)
    return out


def weights_metadata(w: NetworkWeights) -> dict[str, str]:
    return {
        "depth": str(w.depth),
        "channels": str(w.channels),
        "heads": str(w.num_heads),
        "patch": str(PATCH),
        "registers": str(w.register_tokens.shape[0]),
    }


def weights_from_archive(archive: Archive) -> NetworkWeights:
    meta = archive.metadata
    try:
        depth, heads = int(meta["depth"]), int(meta["heads"])
    except (KeyError, ValueError):
        raise MissingEntry("archive metadata must define integer 'depth' and 'heads'") from None
    if int(meta.get("patch", PATCH)) != PATCH or int(meta.get("registers", NUM_REGISTERS)) != NUM_REGISTERS:
        raise ShapeMismatch(f"only patch={PATCH} with {NUM_REGISTERS} registers is supported")

    def get(name, optional=False):
        if name not in archive:
            if optional:
                return None
            raise MissingEntry(f"weight archive lacks {name!r}")
        return archive[name]

    blocks = []
    for i in range(depth):
        kw = {
            f: get(f"blocks.{i}.{suffix}", optional=f in OPTIONAL_BLOCK_FIELDS)
            for f, suffix in BLOCK_NAMES.items()
        }
        blocks.append(BlockWeights(num_heads=heads, **kw))
    net = {k: get(name) for k, name in NET_NAMES.items()}
    w = NetworkWeights(blocks=blocks, **net)
    if "channels" in meta and int(meta["channels"]) != w.channels:
        raise ShapeMismatch(f"metadata channels {meta['channels']} != tensors {w.channels}")
    return w


def load_weights(path) -> NetworkWeights:
    return weights_from_archive(read_archive(path))


def save_weights(w: NetworkWeights, path) -> None:
    write_archive(weights_to_tensors(w), path, weights_metadata(w))


# deterministic generator

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def splitmix64(state: int, count: int) -> np.ndarray:
    """First ``count`` outputs of SplitMix64 started at ``state``."""
    steps = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(np.uint64(state & _MASK64) + steps * np.uint64(_GOLDEN))


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def tensor_seed(seed: int, name: str) -> int:
    """Per-tensor stream state: SplitMix64 finalizer of ``seed XOR fnv1a64(name)``."""
    with np.errstate(over="ignore"):
        return int(_mix64(np.uint64((seed ^ _fnv1a64(name)) & _MASK64)))


def seeded_normal(seed: int, name: str, shape) -> np.ndarray:
    """Standard normals from Box-Muller over consecutive SplitMix64 pairs."""
    n = math.prod(shape)
    raw = splitmix64(tensor_seed(seed, name), 2 * ((n + 1) // 2))
    # 53-bit uniforms in (0, 1]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * len(u1))
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:n].reshape(shape)


def synth_weights(seed: int, arch: Arch) -> NetworkWeights:
    """Seeded weights: N(0, 1) * 0.02 for matrices/biases/tokens, unit norms, unit layer-scale."""
    arch.validate()
    c, hidden = arch.channels, arch.channels * arch.mlp_ratio

    def rand(name, shape):
        return (seeded_normal(seed, name, shape) * 0.02).astype(np.float32)

    ones, zeros = np.ones(c, np.float32), np.zeros(c, np.float32)
    shapes = {
        "qkv_weight": (3 * c, c), "qkv_bias": (3 * c,),
        "proj_weight": (c, c), "proj_bias": (c,),
        "fc1_weight": (hidden, c), "fc1_bias": (hidden,),
        "fc2_weight": (c, hidden), "fc2_bias": (c,),
    }
    blocks = []
    for i in range(arch.depth):
        kw = {f: rand(f"blocks.{i}.{BLOCK_NAMES[f]}", s) for f, s in shapes.items()}
        blocks.append(
            BlockWeights(
                ln1_gamma=ones, ln1_beta=zeros, ln2_gamma=ones, ln2_beta=zeros,
                ls1_gamma=ones, ls2_gamma=ones, num_heads=arch.heads, **kw,
            )
        )
    return NetworkWeights(
        patch_weight=rand(NET_NAMES["patch_weight"], (c, arch.in_channels, PATCH, PATCH)),
        patch_bias=rand(NET_NAMES["patch_bias"], (c,)),
        cls_token=rand(NET_NAMES["cls_token"], (1, c)),
        register_tokens=rand(NET_NAMES["register_tokens"], (NUM_REGISTERS, c)),
        blocks=blocks,
        norm_gamma=ones,
        norm_beta=zeros,
    )
