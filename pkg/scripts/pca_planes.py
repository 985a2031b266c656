#!/usr/bin/env python3
"""Lift a synthetic blob volume with every mode, report FeatDice and dump three-plane PCA images.

With seeded random weights the numbers only show that the pipeline runs end
to end; use --weights with a converted checkpoint for meaningful features.
"""

import argparse
from pathlib import Path

import numpy as np

from planecycle.cli import plane_views, write_ppm
from planecycle.lifting import PATCH, LiftingEngine, LiftMode
from planecycle.metrics import feat_dice, pca_project
from planecycle.weights import Arch, load_weights, synth_weights


def blob_volume(n: int, in_ch: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Noisy background with a bright ellipsoid; returns (raw volume, token-grid mask)."""
    d0, h0 = n, n * PATCH
    z, y, x = np.meshgrid(np.arange(d0), np.arange(h0), np.arange(h0), indexing="ij")
    r = ((z - d0 / 2) / (0.3 * d0)) ** 2 + ((y - h0 / 2) / (0.3 * h0)) ** 2 + ((x - h0 / 2) / (0.25 * h0)) ** 2
    inside = r <= 1.0
    vol = 0.3 * rng.standard_normal(inside.shape) + 2.0 * inside
    mask = inside.reshape(n, n, PATCH, n, PATCH).mean(axis=(2, 4)) >= 0.5
    return np.repeat(vol[..., None], in_ch, axis=-1).astype(np.float32), mask.astype(np.float32)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--weights", help="weight archive; seeded synthetic weights otherwise")
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--out", default="pca_out")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w = load_weights(args.weights) if args.weights else synth_weights(args.seed, Arch(4, 48, 4))
    engine = LiftingEngine(w)
    raw, mask = blob_volume(args.n, w.in_channels, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for mode in LiftMode:
        feats, _ = engine.forward(raw, mode)
        score = feat_dice(feats, mask)
        for plane, img in plane_views(pca_project(feats, 3, args.seed)).items():
            write_ppm(out / f"{mode.value}_{plane}.ppm", img)
        print(f"{mode.value:>4} featdice={score:.4f}")
    print(f"images in {out}/")


if __name__ == "__main__":
    main()
