import csv
import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from planecycle.complexity import (
    BENCH_HEADER,
    REPORT_HEADER,
    attention_cost,
    bench_csv,
    benchmark_forward,
)
from planecycle.lifting import LiftingEngine, LiftMode, build_cycle_schedule
from planecycle.plane import PlaneAxis

dims3 = st.tuples(st.integers(1, 12), st.integers(1, 12), st.integers(1, 12))


def test_cubic_examples():
    flat = attention_cost(LiftMode.FLAT3D, (8, 8, 8), 0, 1).layers[0].attention_pairs
    assert flat == 262144
    for p in PlaneAxis:
        pc = attention_cost(LiftMode.PCG, (8, 8, 8), 0, 1, [p]).layers[0].attention_pairs
        assert pc == 32768
        assert flat // pc == 8 and flat % pc == 0


def test_slice2d_examples():
    assert attention_cost(LiftMode.SLICE2D, (4, 4, 4), 5, 1).layers[0].attention_pairs == 1764
    s = attention_cost(LiftMode.SLICE2D, (1, 3, 5), 0, 2)
    f = attention_cost(LiftMode.FLAT3D, (1, 3, 5), 0, 2)
    assert s.total_pairs == f.total_pairs == 2 * 15**2


def test_plane_cycle_follows_schedule():
    report = attention_cost(LiftMode.PCM, (2, 3, 4), 5, 4)
    assert [(l.plane, l.sequence_count, l.sequence_length) for l in report.layers] == [
        (PlaneAxis.HW, 2, 17), (PlaneAxis.DW, 3, 13), (PlaneAxis.DH, 4, 11), (PlaneAxis.HW, 2, 17),
    ]
    assert report.total_sequences == 11


@given(dims3, st.integers(1, 8))
def test_plane_cycle_never_exceeds_flat(dims, depth):
    sched = build_cycle_schedule(depth)
    pc = attention_cost(LiftMode.PCG, dims, 0, depth, sched)
    flat = attention_cost(LiftMode.FLAT3D, dims, 0, depth)
    assert pc.total_pairs <= flat.total_pairs
    for layer, plane in zip(pc.layers, sched):
        flat_layer = flat.layers[layer.layer].attention_pairs
        assert (layer.attention_pairs == flat_layer) == (dims[plane.axis] == 1)


@given(st.integers(1, 40))
def test_cubic_ratio_is_extent(n):
    flat = attention_cost(LiftMode.FLAT3D, (n, n, n), 0, 1).layers[0].attention_pairs
    for p in PlaneAxis:
        pc = attention_cost(LiftMode.PCG, (n, n, n), 0, 1, [p]).layers[0].attention_pairs
        assert flat == n * pc


def test_report_csv_header():
    text = attention_cost(LiftMode.PCG, (2, 2, 2), 5, 2).to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == REPORT_HEADER
    assert rows[1] == ["pcg", "0", "HW", "2", "9", str(2 * 81)]


def test_benchmark_rows_and_determinism(small_weights):
    engine = LiftingEngine(small_weights)
    modes = [LiftMode.SLICE2D, LiftMode.FLAT3D, LiftMode.PCG]
    dims = [(2, 2, 2), (1, 2, 3)]
    a = benchmark_forward(engine, dims, modes, repeats=3)
    b = benchmark_forward(engine, dims, modes, repeats=3)
    assert len(a) == len(dims) * len(modes)
    assert [r.attn_pairs for r in a] == [r.attn_pairs for r in b]
    for row in a:
        assert row.attn_pairs == attention_cost(row.mode, row.dims, 5, small_weights.depth).total_pairs
        assert row.median_ms > 0
    text = bench_csv(a)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == BENCH_HEADER and len(parsed) == 7
    with pytest.raises(ValueError):
        benchmark_forward(engine, dims, modes, repeats=2)
