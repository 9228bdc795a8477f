import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddseg.attention_fusion import (
    AttentionBlock,
    AttentionStack,
    CostMatrix,
    cost_from_attention,
    fuse_attention,
    resize_attention,
)
from ddseg.errors import ParameterError, ShapeError

from .oracles import attention_resize_reference


def block(tag, maps, grid, weight=1.0):
    return AttentionBlock(tag, np.asarray(maps, dtype=np.float64), grid, weight)


class TestResizeAttention:
    def test_same_grid_is_identity(self):
        rng = np.random.default_rng(0)
        amap = rng.random((12, 12))
        out = resize_attention(amap, (3, 4), (3, 4))
        assert np.array_equal(out, amap)
        assert out is not amap  # caller owns the result

    def test_constant_map_stays_constant(self):
        amap = np.full((4, 4), 0.37)
        out = resize_attention(amap, (2, 2), (5, 3))
        assert np.allclose(out, 0.37, atol=1e-14)

    @pytest.mark.parametrize(
        "grid_b,grid",
        [((2, 2), (4, 4)), ((3, 3), (2, 2)), ((2, 3), (5, 2)), ((4, 2), (3, 5))],
    )
    def test_matches_per_entry_reference(self, grid_b, grid):
        rng = np.random.default_rng(hash(grid_b + grid) % 2**32)
        nb = grid_b[0] * grid_b[1]
        amap = rng.random((nb, nb))
        got = resize_attention(amap, grid_b, grid)
        want = attention_resize_reference(amap, grid_b, grid)
        assert np.allclose(got, want, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            resize_attention(np.zeros((4, 4)), (3, 3), (2, 2))


class TestFuseAttention:
    def test_single_block_head_mean(self):
        maps = np.stack([np.full((4, 4), 1.0), np.full((4, 4), 3.0)])
        fused = fuse_attention(AttentionStack((block("up0", maps, (2, 2)),)), (2, 2))
        assert np.allclose(fused.c, 2.0, atol=1e-14)

    def test_identical_blocks_collapse(self):
        rng = np.random.default_rng(3)
        maps = rng.random((1, 9, 9))
        one = fuse_attention(AttentionStack((block("up0", maps, (3, 3)),)), (3, 3))
        two = fuse_attention(
            AttentionStack(
                (block("up0", maps, (3, 3), 0.5), block("up1", maps, (3, 3), 0.5))
            ),
            (3, 3),
        )
        assert np.allclose(one.c, two.c, atol=1e-14)

    def test_weight_renormalization(self):
        a = block("up0", np.full((1, 4, 4), 1.0), (2, 2), 2.0)
        b = block("up1", np.full((1, 4, 4), 4.0), (2, 2), 6.0)
        fused = fuse_attention(AttentionStack((a, b)), (2, 2))
        # weights 2 and 6 renormalize to 1/4 and 3/4
        assert np.allclose(fused.c, 0.25 * 1.0 + 0.75 * 4.0, atol=1e-14)

    def test_zero_weight_block_ignored(self):
        rng = np.random.default_rng(4)
        junk = rng.random((2, 16, 16))
        keep = np.full((1, 4, 4), 2.0)
        fused = fuse_attention(
            AttentionStack(
                (block("down0", junk, (4, 4), 0.0), block("up0", keep, (2, 2), 1.0))
            ),
            (2, 2),
        )
        assert np.allclose(fused.c, 2.0, atol=1e-14)

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ParameterError):
            AttentionStack((block("up0", np.ones((1, 4, 4)), (2, 2), 0.0),))

    @given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
    def test_fused_within_convex_hull(self, w1, w2):
        rng = np.random.default_rng(9)
        m1 = rng.random((2, 4, 4))
        m2 = rng.random((3, 4, 4))
        fused = fuse_attention(
            AttentionStack(
                (block("up0", m1, (2, 2), w1), block("up1", m2, (2, 2), w2))
            ),
            (2, 2),
        )
        lo = min(m1.min(), m2.min())
        hi = max(m1.max(), m2.max())
        assert (fused.c >= lo - 1e-12).all()
        assert (fused.c <= hi + 1e-12).all()

    def test_block_order_does_not_matter(self):
        rng = np.random.default_rng(5)
        m1 = rng.random((1, 9, 9))
        m2 = rng.random((1, 4, 4))
        b1 = block("up0", m1, (3, 3), 0.3)
        b2 = block("up1", m2, (2, 2), 0.7)
        f12 = fuse_attention(AttentionStack((b1, b2)), (3, 3))
        f21 = fuse_attention(AttentionStack((b2, b1)), (3, 3))
        assert np.allclose(f12.c, f21.c, atol=1e-14)


class TestCostFromAttention:
    def test_raw_passthrough(self):
        rng = np.random.default_rng(6)
        fused = CostMatrix(rng.random((4, 4)), (2, 2))
        cost = cost_from_attention(fused, "raw")
        assert cost is fused

    def test_flip_reverses_order(self):
        c = np.array(
            [
                [0.0, 1.0, 0.5, 0.5],
                [1.0, 0.0, 0.5, 0.5],
                [0.5, 0.5, 0.0, 1.0],
                [0.5, 0.5, 1.0, 0.0],
            ]
        )
        flipped = cost_from_attention(CostMatrix(c, (2, 2)), "flip")
        assert np.allclose(flipped.c, 1.0 - c, atol=1e-14)

    def test_flip_normalizes_range(self):
        c = np.array([[2.0, 6.0], [4.0, 2.0]])
        flipped = cost_from_attention(CostMatrix(c, (1, 2)), "flip")
        assert flipped.c.min() == 0.0 and flipped.c.max() == 1.0
        assert np.allclose(flipped.c, [[1.0, 0.0], [0.5, 1.0]], atol=1e-14)

    def test_flip_of_constant_is_zero(self):
        flipped = cost_from_attention(CostMatrix(np.full((4, 4), 3.0), (2, 2)), "flip")
        assert np.array_equal(flipped.c, np.zeros((4, 4)))

    def test_unknown_direction_rejected(self):
        with pytest.raises(ParameterError):
            cost_from_attention(CostMatrix(np.ones((1, 1)), (1, 1)), "invert")


class TestValidation:
    def test_negative_attention_rejected(self):
        with pytest.raises(ParameterError):
            block("up0", np.full((1, 4, 4), -0.1), (2, 2))

    def test_grid_patch_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            block("up0", np.ones((1, 4, 4)), (2, 3))

    def test_non_square_maps_rejected(self):
        with pytest.raises(ShapeError):
            block("up0", np.ones((1, 4, 3)), (2, 2))

    def test_empty_stack_rejected(self):
        with pytest.raises(ParameterError):
            AttentionStack(())

    def test_cost_matrix_rejects_nan(self):
        with pytest.raises(ParameterError):
            CostMatrix(np.array([[np.nan]]), (1, 1))
