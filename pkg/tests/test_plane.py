import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planecycle.errors import InvalidSchedule, ShapeMismatch
from planecycle.lifting import weights_checksum
from planecycle.plane import (
    PlaneAxis,
    PoolMode,
    coords_for_plane,
    grid_coords,
    plane_cycle_step,
    pool_global_tokens,
    reshape_to_plane,
    restore_from_plane,
)
from planecycle.tensor import permute
from planecycle.vit import block_forward

# permutation bringing each plane's slicing axis to the front, as a HW layout
TO_HW = {PlaneAxis.HW: (0, 1, 2, 3), PlaneAxis.DW: (1, 0, 2, 3), PlaneAxis.DH: (2, 0, 1, 3)}


def cube():
    return np.arange(8, dtype=np.float32).reshape(2, 2, 2, 1)


def test_reshape_examples():
    dw = reshape_to_plane(cube(), PlaneAxis.DW)
    assert dw[0, :, 0].tolist() == [0, 1, 4, 5]
    assert dw[1, :, 0].tolist() == [2, 3, 6, 7]
    assert reshape_to_plane(cube(), PlaneAxis.HW)[0, :, 0].tolist() == [0, 1, 2, 3]
    # DH: slice w, tokens in (d, h) order
    assert reshape_to_plane(cube(), PlaneAxis.DH)[0, :, 0].tolist() == [0, 2, 4, 6]


def test_restore_examples_and_errors():
    for p in PlaneAxis:
        assert np.array_equal(restore_from_plane(reshape_to_plane(cube(), p), p, (2, 2, 2)), cube())
    with pytest.raises(ShapeMismatch):
        restore_from_plane(np.zeros((2, 4, 1), np.float32), PlaneAxis.DW, (3, 2, 2))
    with pytest.raises(ShapeMismatch):
        restore_from_plane(np.zeros((2, 5, 1), np.float32), PlaneAxis.HW, (2, 2, 2))


@given(st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 4)), st.integers(0, 2**32 - 1))
def test_round_trip_bitwise(shape, seed):
    v = np.random.default_rng(seed).standard_normal(shape).astype(np.float32)
    for p in PlaneAxis:
        t = reshape_to_plane(v, p)
        assert t.shape == (shape[p.axis], v.size // (shape[p.axis] * shape[3]), shape[3])
        assert restore_from_plane(t, p, shape[:3]).tobytes() == v.tobytes()


def test_plane_parse():
    assert PlaneAxis.parse("dw") is PlaneAxis.DW
    assert PlaneAxis.parse(" DH ") is PlaneAxis.DH
    with pytest.raises(InvalidSchedule):
        PlaneAxis.parse("xy")


def test_pool_global_tokens_examples(rng):
    g = rng.standard_normal((3, 5, 4)).astype(np.float32)
    assert pool_global_tokens(g, 3, PoolMode.PCG).tobytes() == g.tobytes()
    shared = np.broadcast_to(g[:1], (3, 5, 4)).copy()
    pcm = pool_global_tokens(shared, 6, PoolMode.PCM)
    assert pcm.shape == (6, 5, 4)
    assert np.array_equal(pcm, np.broadcast_to(pcm[0], pcm.shape))
    np.testing.assert_allclose(pcm[0], g[0], atol=1e-6)
    a, b, c = (np.float32(v) for v in (0.25, -1.5, 3.0))
    seq = np.array([a, b, c], np.float32).reshape(3, 1, 1)
    got = pool_global_tokens(seq, 2, PoolMode.PCG)[:, 0, 0]
    assert got.tolist() == [float(np.float32((a + b) / 2)), float(np.float32((b + c) / 2))]


def test_pool_never_mixes_token_positions(rng):
    g = rng.standard_normal((4, 5, 3)).astype(np.float32)
    for mode in PoolMode:
        out = pool_global_tokens(g, 7, mode)
        for tok in range(5):
            alone = pool_global_tokens(g[:, tok : tok + 1], 7, mode)
            assert np.array_equal(out[:, tok : tok + 1], alone)


def test_pcm_averages_even_when_slice_count_unchanged(rng):
    g = rng.standard_normal((3, 5, 2)).astype(np.float32)
    out = pool_global_tokens(g, 3, PoolMode.PCM)
    np.testing.assert_allclose(out[1], g.mean(axis=0), atol=1e-6)


def test_coords_examples():
    rc = coords_for_plane(PlaneAxis.HW, (3, 2, 2), 5)
    assert len(rc) == 9
    assert not rc.mask[:5].any() and rc.mask[5:].all()
    assert np.all(rc.coords[:5] == 0)
    assert rc.coords[5:].tolist() == [[-1, -1], [-1, 1], [1, -1], [1, 1]]
    degenerate = coords_for_plane(PlaneAxis.HW, (4, 1, 3), 0)
    assert np.all(degenerate.coords[:, 0] == 0)
    assert degenerate.coords[:, 1].tolist() == [-1, 0, 1]


def test_coords_consistent_under_axis_permutation():
    dims = (3, 4, 5)
    for p in PlaneAxis:
        perm = TO_HW[p][:3]
        permuted = tuple(dims[a] for a in perm)
        a = coords_for_plane(p, dims, 5)
        b = coords_for_plane(PlaneAxis.HW, permuted, 5)
        assert np.array_equal(a.coords, b.coords) and np.array_equal(a.mask, b.mask)


def test_identity_block_step(small_weights, rng):
    blk = small_weights.blocks[0]
    c = blk.channels
    ident = type(blk)(**{**blk.tensors(), "ls1_gamma": np.zeros(c), "ls2_gamma": np.zeros(c)}, num_heads=blk.num_heads)
    v = rng.standard_normal((3, 2, 4, c)).astype(np.float32)
    g = rng.standard_normal((3, 5, c)).astype(np.float32)
    for p in PlaneAxis:
        for mode in PoolMode:
            out_v, out_g = plane_cycle_step(v, g, ident, p, mode)
            assert out_v.tobytes() == v.tobytes()
            assert out_g.tobytes() == pool_global_tokens(g, v.shape[p.axis], mode).tobytes()


def test_hw_step_equals_per_slice_loop(small_weights, rng):
    blk = small_weights.blocks[0]
    c = blk.channels
    v = rng.standard_normal((4, 3, 2, c)).astype(np.float32)
    g = rng.standard_normal((4, 5, c)).astype(np.float32)
    out_v, out_g = plane_cycle_step(v, g, blk, PlaneAxis.HW, PoolMode.PCG)
    coords = coords_for_plane(PlaneAxis.HW, v.shape[:3], 5)
    for d in range(4):
        seq = np.concatenate([g[d], v[d].reshape(-1, c)], axis=0)
        ref = block_forward(seq, blk, coords)
        assert out_g[d].tobytes() == ref[:5].tobytes()
        assert out_v[d].tobytes() == ref[5:].reshape(3, 2, c).tobytes()


def test_step_shapes_and_trace(small_weights, rng):
    blk = small_weights.blocks[0]
    c = blk.channels
    v = rng.standard_normal((2, 3, 4, c)).astype(np.float32)
    g = rng.standard_normal((5, 5, c)).astype(np.float32)
    for p in PlaneAxis:
        trace = []
        out_v, out_g = plane_cycle_step(v, g, blk, p, PoolMode.PCG, trace=trace)
        n = v.shape[p.axis]
        assert out_v.shape == v.shape
        assert out_g.shape == (n, 5, c)
        assert trace == [(p, n, 5 + 24 // n)]


def test_step_channel_mismatch(small_weights, rng):
    blk = small_weights.blocks[0]
    with pytest.raises(ShapeMismatch):
        plane_cycle_step(np.zeros((2, 2, 2, 8), np.float32), np.zeros((2, 5, 8), np.float32), blk, PlaneAxis.HW)


def test_step_does_not_touch_weights(small_weights, rng):
    before = weights_checksum(small_weights)
    c = small_weights.channels
    v = rng.standard_normal((2, 3, 2, c)).astype(np.float32)
    g = rng.standard_normal((2, 5, c)).astype(np.float32)
    for p in PlaneAxis:
        plane_cycle_step(v, g, small_weights.blocks[1], p, PoolMode.PCM)
    assert weights_checksum(small_weights) == before


def test_threads_are_bit_identical(small_weights, rng):
    c = small_weights.channels
    v = rng.standard_normal((5, 3, 2, c)).astype(np.float32)
    g = rng.standard_normal((5, 5, c)).astype(np.float32)
    ref = plane_cycle_step(v, g, small_weights.blocks[0], PlaneAxis.HW, threads=1)
    for threads in (2, 3, 8):
        got = plane_cycle_step(v, g, small_weights.blocks[0], PlaneAxis.HW, threads=threads)
        assert got[0].tobytes() == ref[0].tobytes() and got[1].tobytes() == ref[1].tobytes()


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1), st.sampled_from([PlaneAxis.DW, PlaneAxis.DH]), st.sampled_from(list(PoolMode)))
def test_plane_permutation_equivariance(small_weights, seed, p, mode):
    rng = np.random.default_rng(seed)
    c = small_weights.channels
    dims = tuple(int(x) for x in rng.integers(1, 5, size=3))
    v = rng.standard_normal(dims + (c,)).astype(np.float32)
    g = rng.standard_normal((int(rng.integers(1, 5)), 5, c)).astype(np.float32)
    blk = small_weights.blocks[0]
    direct_v, direct_g = plane_cycle_step(v, g, blk, p, mode)
    perm = TO_HW[p]
    hw_v, hw_g = plane_cycle_step(permute(v, perm), g, blk, PlaneAxis.HW, mode)
    inv = tuple(np.argsort(perm))
    np.testing.assert_allclose(direct_v, permute(hw_v, inv), atol=1e-5, rtol=0)
    np.testing.assert_allclose(direct_g, hw_g, atol=1e-5, rtol=0)


def test_grid_coords_three_axes():
    rc = grid_coords((2, 1, 3), 1)
    assert rc.coords.shape == (7, 3)
    assert rc.coords[1:, 1].tolist() == [0] * 6
    assert rc.coords[1:4, 0].tolist() == [-1, -1, -1]
