import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from pihot.mask_ops import MaskError, as_binary_mask, dilate_mask, load_mask, save_mask

masks = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)),
               elements=st.integers(0, 1))
odd = st.sampled_from([1, 3, 5, 7])


def test_empty_set_stays_empty():
    np.testing.assert_array_equal(dilate_mask(np.zeros((5, 5), np.uint8), 3), 0)


def test_single_pixel_grows_to_block():
    m = np.zeros((5, 5), np.uint8)
    m[2, 2] = 1
    expected = np.zeros((5, 5), np.uint8)
    expected[1:4, 1:4] = 1
    np.testing.assert_array_equal(dilate_mask(m, 3), expected)


def test_random_mask_matches_window_max():
    rng = np.random.default_rng(8)
    m = (rng.random((8, 8)) < 0.2).astype(np.uint8)
    np.testing.assert_array_equal(dilate_mask(m, 5), np.array(oracles.dilate(m.tolist(), 5)))


def test_exhaustive_4x4():
    for bits in itertools.product((0, 1), repeat=16):
        m = np.array(bits, np.uint8).reshape(4, 4)
        assert dilate_mask(m, 3).tolist() == oracles.dilate(m.tolist(), 3)


def test_corner_pixel_is_zero_padded():
    m = np.zeros((4, 4), np.uint8)
    m[0, 0] = 1
    out = dilate_mask(m, 3)
    assert out.sum() == 4
    assert out[:2, :2].all()


@pytest.mark.parametrize("n", [0, 2, 4, -3])
def test_rejects_even_or_nonpositive_kernel(n):
    with pytest.raises(MaskError):
        dilate_mask(np.zeros((3, 3), np.uint8), n)


def test_rejects_empty_and_nonbinary():
    with pytest.raises(MaskError):
        dilate_mask(np.zeros((0, 4), np.uint8), 3)
    with pytest.raises(MaskError):
        as_binary_mask(np.array([[0, 2]]))
    with pytest.raises(MaskError):
        as_binary_mask(np.zeros(4))


def test_iterations_compose():
    m = np.zeros((9, 9), np.uint8)
    m[4, 4] = 1
    np.testing.assert_array_equal(dilate_mask(m, 3, iterations=2), dilate_mask(m, 5))


@given(masks)
def test_identity_for_unit_kernel(m):
    np.testing.assert_array_equal(dilate_mask(m, 1), m)


@given(masks, odd)
def test_extensive(m, n):
    assert (dilate_mask(m, n) >= m).all()


@given(masks, masks, odd)
def test_monotone(a, b, n):
    if a.shape != b.shape:
        return
    union = a | b
    assert (dilate_mask(a, n) <= dilate_mask(union, n)).all()


@given(masks, odd)
@settings(max_examples=50)
def test_commutes_with_flips(m, n):
    for axis in (0, 1):
        np.testing.assert_array_equal(dilate_mask(np.flip(m, axis), n),
                                      np.flip(dilate_mask(m, n), axis))


def test_png_roundtrip(tmp_path):
    m = np.zeros((6, 7), np.uint8)
    m[1:3, 2:6] = 1
    save_mask(tmp_path / "m.png", m)
    np.testing.assert_array_equal(load_mask(tmp_path / "m.png"), m)


def test_png_loader_rejects_gray_levels(tmp_path):
    from PIL import Image

    Image.fromarray(np.full((3, 3), 128, np.uint8), mode="L").save(tmp_path / "bad.png")
    with pytest.raises(MaskError):
        load_mask(tmp_path / "bad.png")
