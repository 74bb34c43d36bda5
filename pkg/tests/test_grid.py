import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mutualshape.grid import (BinaryMask, GridMismatchError, MaskFormatError, RasterGrid, ShapeSet,
                              average_image, dice, encode_pgm, intersection_area, load_mask,
                              parse_pgm, region_area, save_mask, symmetric_difference_area)


def masks(h=8, w=8):
    return arrays(np.bool_, (h, w)).map(BinaryMask.from_array)


def test_grid_rejects_empty():
    with pytest.raises(ValueError):
        RasterGrid(0, 3)


def test_mask_values_are_binary_and_readonly():
    m = BinaryMask.from_array(np.array([[0, 2], [1, 0]]))
    assert set(np.unique(m.values)) <= {0, 1}
    with pytest.raises(ValueError):
        m.values[0, 0] = 1


@given(masks())
def test_complement_involution(m):
    assert m.complement().complement() == m


def test_shapeset_requires_common_grid():
    a = BinaryMask.from_array(np.zeros((3, 3)))
    b = BinaryMask.from_array(np.zeros((3, 4)))
    with pytest.raises(GridMismatchError):
        ShapeSet.from_masks([a, b])


def test_load_p2_threshold(tmp_path):
    p = tmp_path / "m.pgm"
    p.write_bytes(b"P2\n2 2\n255\n0 255\n255 0\n")
    assert load_mask(p, 128).values.ravel().tolist() == [0, 1, 1, 0]
    assert load_mask(p, 128, invert=True).values.ravel().tolist() == [1, 0, 0, 1]


def test_all_zero_image_is_empty(tmp_path):
    p = tmp_path / "z.pgm"
    p.write_bytes(encode_pgm(np.zeros((5, 7), np.uint8)))
    m = load_mask(p)
    assert region_area(m) == 0 and m.grid.shape == (5, 7)


@pytest.mark.parametrize("binary", [True, False])
def test_roundtrip_random_64(tmp_path, binary):
    rng = np.random.default_rng(3)
    m = BinaryMask.from_array(rng.random((64, 64)) < 0.5)
    save_mask(m, tmp_path / "r.pgm", binary=binary)
    back = load_mask(tmp_path / "r.pgm")
    assert np.array_equal(back.values, m.values)


@settings(max_examples=30)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9))), st.booleans())
def test_encode_parse_bit_exact(a, binary):
    assert np.array_equal(parse_pgm(encode_pgm(a, binary)), a)


def test_encode_header_layout():
    assert encode_pgm(np.array([[0, 255]], np.uint8)) == b"P5\n2 1\n255\n\x00\xff"


def test_comments_and_16bit():
    data = b"P5 # c\n2 1\n# x\n65535\n\x00\x01\xff\xff"
    assert parse_pgm(data).tolist() == [[1, 65535]]


@pytest.mark.parametrize("data,offset", [
    (b"P3\n1 1\n255\n0", 0),
    (b"P5\n0 1\n255\n", 3),
    (b"P5\n2 2\n255\n\x00\x01", 13),
])
def test_parse_errors_name_offset(data, offset):
    with pytest.raises(MaskFormatError) as exc:
        parse_pgm(data)
    assert exc.value.offset == offset
    assert f"byte offset {offset}" in str(exc.value)


def test_dice_examples():
    sq = np.zeros((4, 4), bool)
    sq[1:3, 1:3] = True
    half = np.zeros((4, 4), bool)
    half[1, 1:3] = True
    a, b = BinaryMask.from_array(sq), BinaryMask.from_array(half)
    assert dice(a, a) == 1.0
    assert dice(a, b) == pytest.approx(2 * 2 / 6)
    assert dice(a, a.complement()) == 0.0
    empty = BinaryMask.from_array(np.zeros((4, 4)))
    assert dice(empty, empty) == 1.0


def test_dice_grid_mismatch():
    with pytest.raises(GridMismatchError):
        dice(BinaryMask.from_array(np.ones((2, 2))), BinaryMask.from_array(np.ones((2, 3))))


@given(masks(), masks())
def test_dice_symmetry_and_xor_identity(a, b):
    assert dice(a, b) == dice(b, a)
    assert symmetric_difference_area(a, b) == region_area(a) + region_area(b) - 2 * intersection_area(a, b)


@given(masks(5, 6))
def test_area_matches_loop(m):
    count = 0
    for r in range(5):
        for c in range(6):
            count += int(m.values[r, c])
    assert region_area(m) == count


def test_average_image():
    a = BinaryMask.from_array(np.array([[1, 0], [1, 1]]))
    b = BinaryMask.from_array(np.array([[0, 0], [1, 1]]))
    assert np.array_equal(average_image(ShapeSet.from_masks([a, a])), a.values)
    assert average_image(ShapeSet.from_masks([a, b]))[0, 0] == 0.5
