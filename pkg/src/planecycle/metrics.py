"""Zero-training feature diagnostics: FeatDice and PCA projection."""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceFailure, EmptyMask, IndivisibleExtent, ShapeMismatch, ZeroReferenceFeature

THRESHOLDS = np.arange(21) / 20.0
SIM_DECIMALS = 9


def downsample_mask(mask: np.ndarray, patch: int = 16) -> np.ndarray:
    """Majority vote of ``mask[D0, H0, W0]`` over each ``patch x patch`` footprint (ties positive)."""
    d0, h0, w0 = mask.shape
    if h0 % patch or w0 % patch:
        raise IndivisibleExtent(f"mask extents {h0}x{w0} not divisible by {patch}")
    m = (np.asarray(mask) > 0.5).reshape(d0, h0 // patch, patch, w0 // patch, patch)
    counts = m.sum(axis=(2, 4))
    return (2 * counts >= patch * patch).astype(np.float32)


def reference_voxel(mask: np.ndarray) -> tuple[int, int, int]:
    """Rounded mask centroid, snapped to the nearest positive voxel when it falls outside."""
    pos = np.argwhere(mask > 0.5)
    if len(pos) == 0:
        raise EmptyMask("lesion mask has no positive voxel")
    centre = np.floor(pos.mean(axis=0) + 0.5).astype(int)
    if mask[tuple(centre)] > 0.5:
        return tuple(int(c) for c in centre)
    # argwhere is in row-major order, so argmin breaks ties at the lowest index
    d2 = ((pos - centre) ** 2).sum(axis=1)
    return tuple(int(c) for c in pos[np.argmin(d2)])


def similarity_map(features: np.ndarray, ref: tuple[int, int, int]) -> np.ndarray:
    """Cosine similarity of every voxel feature to ``features[ref]``; zero-norm voxels score 0.

    Values are rounded to 1e-9 so threshold decisions do not flip under rescaling.
    """
    f = np.asarray(features, dtype=np.float64)
    r = f[ref]
    r_norm = np.sqrt((r * r).sum())
    if r_norm == 0.0:
        raise ZeroReferenceFeature(f"reference feature at {ref} is the zero vector")
    norms = np.sqrt((f * f).sum(axis=-1))
    dots = (f * r).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(norms > 0, dots / (norms * r_norm), 0.0)
    return np.round(np.clip(sim, -1.0, 1.0), SIM_DECIMALS)


def dice(pred: np.ndarray, target: np.ndarray) -> float:
    inter = np.logical_and(pred, target).sum()
    total = pred.sum() + target.sum()
    return 2.0 * inter / total if total else 1.0


def feat_dice(features: np.ndarray, mask: np.ndarray, return_threshold: bool = False):
    """Best Dice over thresholds {0, 0.05, ..., 1} applied to ``(sim + 1) / 2``.

    ``features`` is ``[D, H, W, C]`` and ``mask`` the ``[D, H, W]`` lesion mask
    on the same grid. A voxel is predicted positive when its score is >= the
    threshold.
    """
    if features.shape[:3] != mask.shape or features.ndim != 4:
        raise ShapeMismatch(f"features {features.shape} and mask {mask.shape} grids differ")
    target = np.asarray(mask) > 0.5
    score = (similarity_map(features, reference_voxel(mask)) + 1.0) / 2.0
    best, best_t = -1.0, None
    for t in THRESHOLDS:
        d = dice(score >= t, target)
        if d > best:
            best, best_t = d, t
    return (best, best_t) if return_threshold else best


# PCA by power iteration with deflation


def principal_components(
    x: np.ndarray, k: int, seed: int = 0, tol: float = 1e-8, max_iter: int = 1000
) -> tuple[np.ndarray, np.ndarray]:
    """Top-``k`` eigenpairs of the covariance of the rows of ``x[N, C]``.

    Returns ``(eigenvalues [k], components [k, C])``. Each iterate is
    re-orthogonalized against the components already found. Raises
    ``ConvergenceFailure`` when an iteration budget runs out with a residual
    above 1e-4 (relative to the leading eigenvalue).
    """
    x = np.asarray(x, dtype=np.float64)
    n, c = x.shape
    if not 1 <= k <= c:
        raise ShapeMismatch(f"k={k} must lie in 1..{c}")
    if n < k + 1:
        raise ShapeMismatch(f"need at least {k + 1} samples, got {n}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    scale = max(np.abs(cov).max(), np.finfo(float).tiny)
    rng = np.random.default_rng(seed)

    vals, vecs = [], []
    deflated = cov.copy()

    def orth(v):
        for u in vecs:
            v = v - (u @ v) * u
        return v

    for _ in range(k):
        v = orth(rng.standard_normal(c))
        v /= np.linalg.norm(v)
        converged = False
        for _ in range(max_iter):
            w = orth(deflated @ v)
            norm = np.linalg.norm(w)
            if norm <= 1e-14 * scale:
                # remaining spectrum is numerically zero
                converged = True
                break
            w /= norm
            if w @ v < 0:
                w = -w
            delta = np.linalg.norm(w - v)
            v = w
            if delta < tol:
                converged = True
                break
        lam = float(v @ cov @ v)
        residual = np.linalg.norm(cov @ v - lam * v) / scale
        if not converged and residual > 1e-4:
            raise ConvergenceFailure(
                f"power iteration for component {len(vecs)} stalled (residual {residual:.2e})"
            )
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        vals.append(lam)
        vecs.append(v)
        deflated = deflated - lam * np.outer(v, v)
    return np.array(vals), np.array(vecs)


def pca_project(features: np.ndarray, k: int = 3, seed: int = 0) -> np.ndarray:
    """Project ``[D, H, W, C]`` features onto their top-``k`` components, min-max scaled to [0, 1]."""
    d, h, w, c = features.shape
    tokens = np.asarray(features, dtype=np.float64).reshape(-1, c)
    _, comps = principal_components(tokens, k, seed)
    proj = (tokens - tokens.mean(axis=0)) @ comps.T
    lo = proj.min(axis=0)
    span = proj.max(axis=0) - lo
    # spreads below float32 resolution of the leading component are rounding noise
    flat = span <= max(1e-5 * float(span.max()), 1e-30)
    out = (proj - lo) / np.where(flat, 1.0, span)
    out[:, flat] = 0.0
    return out.reshape(d, h, w, k).astype(np.float32)
