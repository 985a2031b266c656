"""Embedded invariant checks run by ``planecycle selftest``.

Checks look up implementation functions through their modules at call time,
so a patched implementation is what gets checked.
"""

from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import archive, complexity, lifting, plane, tensor
from .lifting import LiftMode, PATCH
from .plane import PlaneAxis, PoolMode
from .weights import Arch, synth_weights

CHECKS: list[tuple[str, Callable[[], bool]]] = []


def check(name):
    def register(fn):
        CHECKS.append((name, fn))
        return fn

    return register


def _small_weights(depth=2):
    return synth_weights(7, Arch(depth=depth, channels=32, heads=2, in_channels=1))


def _volume(rng, d, h, w, in_ch=1):
    return rng.standard_normal((d, h * PATCH, w * PATCH, in_ch)).astype(np.float32)


def perturb_patch(raw: np.ndarray, d: int, h: int, w: int, delta: float = 1.0) -> np.ndarray:
    out = raw.copy()
    out[d, h * PATCH : (h + 1) * PATCH, w * PATCH : (w + 1) * PATCH, :] += delta
    return out


@check("plane round trip")
def _round_trip():
    rng = np.random.default_rng(0)
    for _ in range(10):
        dims = tuple(int(x) for x in rng.integers(1, 6, size=3))
        v = rng.standard_normal(dims + (3,)).astype(np.float32)
        for p in PlaneAxis:
            back = plane.restore_from_plane(plane.reshape_to_plane(v, p), p, dims)
            if not np.array_equal(back, v):
                return False
    return True


@check("adaptive pool bins")
def _pool_bins():
    rng = np.random.default_rng(1)
    for length in range(1, 17):
        x = rng.standard_normal((length, 2)).astype(np.float32)
        for out_len in range(1, 17):
            got = tensor.adaptive_avg_pool_1d(x, out_len)
            for i in range(out_len):
                lo = (i * length) // out_len
                hi = -((-(i + 1) * length) // out_len)
                acc = x[lo].astype(np.float64)
                for r in range(lo + 1, hi):
                    acc = acc + x[r]
                if not np.array_equal(got[i], (acc / (hi - lo)).astype(np.float32)):
                    return False
    return True


@check("pcg identity on unchanged slice count")
def _pcg_identity():
    g = np.random.default_rng(2).standard_normal((4, 5, 8)).astype(np.float32)
    return np.array_equal(plane.pool_global_tokens(g, 4, PoolMode.PCG), g)


@check("2d equivalence")
def _two_d_equivalence():
    w = _small_weights()
    raw = _volume(np.random.default_rng(3), 3, 2, 3)
    slice2d, _ = lifting.forward(raw, w, LiftMode.SLICE2D)
    allhw, _ = lifting.forward(raw, w, LiftMode.PCG, [PlaneAxis.HW] * w.depth)
    return np.array_equal(slice2d, allhw)


@check("receptive field")
def _receptive_field():
    w = _small_weights(depth=2)
    raw = _volume(np.random.default_rng(4), 3, 3, 3)
    bumped = perturb_patch(raw, 1, 1, 1)
    sched = [PlaneAxis.HW, PlaneAxis.DW]
    a, _ = lifting.forward(raw, w, LiftMode.PCG, sched)
    b, _ = lifting.forward(bumped, w, LiftMode.PCG, sched)
    spread = np.mean(np.abs(a - b) > 1e-9) >= 0.99
    a2, _ = lifting.forward(raw, w, LiftMode.SLICE2D)
    b2, _ = lifting.forward(bumped, w, LiftMode.SLICE2D)
    others = np.delete(np.arange(3), 1)
    return bool(spread and np.array_equal(a2[others], b2[others]))


@check("complexity identities")
def _complexity():
    for n in (2, 4, 8, 16):
        flat = complexity.attention_cost(LiftMode.FLAT3D, (n, n, n), 0, 4).layers[0].attention_pairs
        for p in PlaneAxis:
            pc = complexity.attention_cost(LiftMode.PCG, (n, n, n), 0, 1, [p]).layers[0].attention_pairs
            if flat != n * pc:
                return False
        s2d = complexity.attention_cost(LiftMode.SLICE2D, (n, n, n), 5, 1).layers[0].attention_pairs
        if s2d != n * (5 + n * n) ** 2:
            return False
    return True


@check("archive round trip")
def _archive():
    rng = np.random.default_rng(5)
    tensors = {f"t{i}": rng.standard_normal((2, i + 1)).astype(np.float32) for i in range(4)}
    blob = archive.serialize_archive(tensors, {"k": "v"})
    parsed = archive.parse_archive(blob)
    return archive.serialize_archive(parsed.tensors, parsed.metadata) == blob


@check("parameter free")
def _parameter_free():
    w = _small_weights()
    before = lifting.weights_checksum(w)
    raw = _volume(np.random.default_rng(6), 2, 2, 2)
    for mode in (LiftMode.SLICE2D, LiftMode.PCM, LiftMode.PCG):
        lifting.forward(raw, w, mode)
    engine = lifting.LiftingEngine(w)
    own = {id(t) for t in w.tensors().values()}
    return lifting.weights_checksum(w) == before and all(
        id(t) in own for t in engine.registered_tensors().values()
    )


def run_selftest(out=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            passed = bool(fn())
        except Exception as exc:  # a crash is a failed check
            passed = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        out(f"{'PASS' if passed else 'FAIL'} {name}")
        ok &= passed
    return ok
