import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adnet.errors import InvalidGeometryError, InvalidShapeError, ShapeMismatchError
from adnet.tensor import col2im, flat_index, im2col, matmul, tensor_create

from oracles import naive_im2col


def test_create_zero_fill():
    t = tensor_create([2, 2], 0)
    assert t.tolist() == [[0, 0], [0, 0]]
    assert tensor_create([1, 3, 224, 224], 0).size == 150528


def test_create_random_is_reproducible():
    a = tensor_create([3, 5], "normal", seed=7)
    b = tensor_create([3, 5], "normal", seed=7)
    assert a.tobytes() == b.tobytes()
    assert a.dtype == np.float32


@pytest.mark.parametrize("shape", [[0], [2, -1], []])
def test_create_rejects_bad_shape(shape):
    with pytest.raises(InvalidShapeError):
        tensor_create(shape)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.data())
def test_row_major_round_trip(shape, data):
    t = np.arange(int(np.prod(shape)), dtype=np.float64).reshape(shape)
    index = tuple(data.draw(st.integers(0, s - 1)) for s in shape)
    assert t.ravel()[flat_index(shape, index)] == t[index]


def test_matmul_examples():
    x = np.array([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), x), x)
    np.testing.assert_array_equal(matmul(np.array([[1.0, 2], [3, 4]]), np.ones((2, 1))), [[3], [7]])
    assert matmul(np.ones((1, 3)), np.ones((3, 1))).tolist() == [[3.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative():
    rng = np.random.default_rng(0)
    a, b, c = rng.random((4, 5)), rng.random((5, 3)), rng.random((3, 6))
    np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), rtol=1e-6)


def test_im2col_single_patch():
    x = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
    cols = im2col(x, 3)
    assert cols.shape == (9, 1)
    np.testing.assert_array_equal(cols[:, 0], x.ravel())


def test_im2col_padded_corner():
    x = np.arange(1, 17, dtype=np.float64).reshape(1, 1, 4, 4)
    cols = im2col(x, 3, 1, 1)
    assert cols.shape == (9, 16)
    assert np.count_nonzero(cols[:, 0]) == 4


@pytest.mark.parametrize(
    "side,k,stride,pad", [(6, 3, 1, 1), (6, 3, 1, 0), (6, 1, 1, 0), (7, 3, 2, 0), (6, 2, 2, 0)]
)
def test_im2col_matches_patch_enumeration(side, k, stride, pad):
    x = np.random.default_rng(k + stride + pad).standard_normal((2, 3, side, side))
    np.testing.assert_array_equal(im2col(x, k, stride, pad), naive_im2col(x, k, stride, pad))


def test_col2im_inverts_1x1():
    x = np.random.default_rng(1).random((2, 3, 4, 5))
    np.testing.assert_array_equal(col2im(im2col(x, 1), x.shape, 1), x)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 2), st.integers(1, 3), st.integers(3, 7), st.integers(3, 7),
    st.sampled_from([1, 3]), st.integers(0, 1), st.integers(0, 2**31),
)
def test_im2col_col2im_adjoint(n, c, h, w, k, pad, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, c, h, w))
    g = rng.standard_normal((c * k * k, n * (h + 2 * pad - k + 1) * (w + 2 * pad - k + 1)))
    lhs = np.sum(im2col(x, k, 1, pad) * g)
    rhs = np.sum(x * col2im(g, x.shape, k, 1, pad))
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-9)


def test_im2col_bad_geometry():
    with pytest.raises(InvalidGeometryError):
        im2col(np.ones((1, 1, 4, 4)), 3, 2, 0)
