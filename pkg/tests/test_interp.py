import numpy as np
import pytest

from ddseg.interp import bilinear_resize, bilinear_sample, resize_matrix

from .oracles import bilinear_reference


def test_same_size_is_exact_identity():
    rng = np.random.default_rng(0)
    img = rng.normal(size=(5, 7))
    assert np.array_equal(bilinear_resize(img, (5, 7)), img)


def test_resize_matrix_rows_sum_to_one():
    for n_src, n_dst in [(2, 7), (5, 3), (8, 8), (1, 4), (3, 10)]:
        m = resize_matrix(n_src, n_dst)
        assert np.allclose(m.sum(axis=1), 1.0, atol=1e-15)
        assert (m >= 0).all()


def test_constant_preserved_at_any_size():
    img = np.full((3, 4), 0.37)
    out = bilinear_resize(img, (11, 6))
    assert np.allclose(out, 0.37, atol=1e-15)


@pytest.mark.parametrize("shape,out", [((3, 5), (7, 4)), ((2, 2), (4, 4)), ((4, 3), (4, 9))])
def test_matches_brute_force_oracle(shape, out):
    rng = np.random.default_rng(42)
    img = rng.normal(size=shape)
    got = bilinear_resize(img, out)
    want = bilinear_reference(img, *out)
    assert np.allclose(got, want, atol=1e-12)


def test_three_channel_resize():
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(4, 4, 3))
    out = bilinear_resize(img, (6, 5))
    for ch in range(3):
        assert np.allclose(out[:, :, ch], bilinear_reference(img[:, :, ch], 6, 5), atol=1e-12)


def test_sample_constant_bit_exact():
    img = np.full((4, 4), 0.123456789)
    ys = np.array([0.25, 1.7, 3.0])
    xs = np.array([2.9, 0.0, 1.5])
    out = bilinear_sample(img, ys, xs)
    assert (out == 0.123456789).all()


def test_sample_at_integer_positions_returns_grid_values():
    rng = np.random.default_rng(3)
    img = rng.normal(size=(3, 4))
    ys, xs = np.meshgrid(np.arange(3.0), np.arange(4.0), indexing="ij")
    assert np.array_equal(bilinear_sample(img, ys, xs), img)


def test_sample_clamps_outside_positions():
    img = np.arange(6.0).reshape(2, 3)
    out = bilinear_sample(img, np.array([-5.0, 9.0]), np.array([-5.0, 9.0]))
    assert out[0] == img[0, 0]
    assert out[1] == img[1, 2]


def test_sample_midpoint_average():
    img = np.array([[0.0, 1.0]])
    out = bilinear_sample(img, np.array([0.0]), np.array([0.5]))
    assert np.allclose(out, 0.5, atol=1e-15)
