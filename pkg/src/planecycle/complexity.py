"""Exact attention-pair accounting and wall-clock benchmarking of the lifting modes."""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .lifting import PATCH, LiftingEngine, LiftMode, build_cycle_schedule
from .plane import PlaneAxis

REPORT_HEADER = ["mode", "layer", "plane", "sequence_count", "sequence_length", "attention_pairs"]
BENCH_HEADER = ["mode", "D", "H", "W", "depth", "attn_pairs", "median_ms"]


@dataclass(frozen=True)
class LayerCost:
    layer: int
    plane: Optional[PlaneAxis]
    sequence_count: int
    sequence_length: int

    @property
    def attention_pairs(self) -> int:
        return self.sequence_count * self.sequence_length**2


@dataclass
class ComplexityReport:
    mode: LiftMode
    dims: tuple[int, int, int]
    num_globals: int
    layers: list[LayerCost] = field(default_factory=list)

    @property
    def total_pairs(self) -> int:
        return sum(l.attention_pairs for l in self.layers)

    @property
    def total_sequences(self) -> int:
        return sum(l.sequence_count for l in self.layers)

    def rows(self) -> list[list]:
        return [
            [self.mode.value, l.layer, l.plane.name if l.plane else "", l.sequence_count,
             l.sequence_length, l.attention_pairs]
            for l in self.layers
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        writer.writerows(self.rows())
        return buf.getvalue()


def attention_cost(
    mode: LiftMode,
    dims: Sequence[int],
    g: int,
    depth: int,
    schedule: Optional[Sequence[PlaneAxis]] = None,
) -> ComplexityReport:
    """Per-layer sequence counts and lengths for a ``(D, H, W)`` token grid."""
    d, h, w = (int(x) for x in dims)
    total = d * h * w
    report = ComplexityReport(mode, (d, h, w), g)
    if mode is LiftMode.SLICE2D:
        report.layers = [LayerCost(i, PlaneAxis.HW, d, g + h * w) for i in range(depth)]
    elif mode is LiftMode.FLAT3D:
        report.layers = [LayerCost(i, None, 1, g + total) for i in range(depth)]
    else:
        schedule = list(schedule) if schedule is not None else build_cycle_schedule(depth)
        extents = (d, h, w)
        report.layers = [
            LayerCost(i, p, extents[p.axis], g + total // extents[p.axis])
            for i, p in enumerate(schedule[:depth])
        ]
    return report


@dataclass(frozen=True)
class BenchRow:
    mode: LiftMode
    dims: tuple[int, int, int]
    depth: int
    attn_pairs: int
    median_ms: float

    def as_list(self) -> list:
        d, h, w = self.dims
        return [self.mode.value, d, h, w, self.depth, self.attn_pairs, f"{self.median_ms:.3f}"]


def benchmark_forward(
    engine: LiftingEngine,
    dims_list: Iterable[Sequence[int]],
    modes: Iterable[LiftMode],
    repeats: int = 3,
    g: Optional[int] = None,
    seed: int = 0,
) -> list[BenchRow]:
    """Median wall time of ``engine.forward`` per (token grid, mode); one warm-up run is discarded.

    ``g`` overrides the global-token count used for the ``attn_pairs`` column only.
    """
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    w = engine.weights
    g = w.num_globals if g is None else g
    modes = list(modes)
    rng = np.random.default_rng(seed)
    rows = []
    for dims in dims_list:
        d, h, wd = (int(x) for x in dims)
        raw = rng.standard_normal((d, h * PATCH, wd * PATCH, w.in_channels)).astype(np.float32)
        for mode in modes:
            engine.forward(raw, mode)
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                engine.forward(raw, mode)
                times.append(time.perf_counter() - t0)
            pairs = attention_cost(mode, (d, h, wd), g, w.depth).total_pairs
            rows.append(BenchRow(mode, (d, h, wd), w.depth, pairs, 1e3 * statistics.median(times)))
    return rows


def bench_csv(rows: Iterable[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    writer.writerows(r.as_list() for r in rows)
    return buf.getvalue()
