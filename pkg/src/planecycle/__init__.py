"""Training-free 2D-to-3D lifting of ViT backbones by cycling attention planes."""

from .lifting import (
    LiftingEngine,
    LiftMode,
    NetworkWeights,
    build_cycle_schedule,
    extract_global_summary,
    forward,
    patch_embed_volume,
)
from .plane import PlaneAxis, PoolMode, plane_cycle_step, pool_global_tokens
from .vit import BlockWeights, RopeCoords, block_forward
from .weights import Arch, load_weights, save_weights, synth_weights

__all__ = [
    "Arch",
    "BlockWeights",
    "LiftMode",
    "LiftingEngine",
    "NetworkWeights",
    "PlaneAxis",
    "PoolMode",
    "RopeCoords",
    "block_forward",
    "build_cycle_schedule",
    "extract_global_summary",
    "forward",
    "load_weights",
    "patch_embed_volume",
    "plane_cycle_step",
    "pool_global_tokens",
    "save_weights",
    "synth_weights",
]
