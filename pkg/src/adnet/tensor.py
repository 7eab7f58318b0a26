"""Dense tensor helpers and the raw kernels the layers are built on.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order. Image
batches use N x C x H x W layout throughout.
"""
import numpy as np

from .errors import InvalidGeometryError, InvalidShapeError, ShapeMismatchError

DEFAULT_DTYPE = np.float32


def _check_shape(shape):
    shape = tuple(int(s) for s in shape)
    if len(shape) < 1 or any(s < 1 for s in shape):
        raise InvalidShapeError(f"extents must be >= 1 and rank >= 1, got {shape}")
    return shape


def tensor_create(shape, fill=0.0, seed=0, dtype=DEFAULT_DTYPE):
    """Allocate a tensor filled with a constant or random values.

    ``fill`` is either a number or one of ``"uniform"`` (in [0, 1)) and
    ``"normal"`` (standard normal). Random fills are reproducible per seed.
    """
    shape = _check_shape(shape)
    if isinstance(fill, str):
        rng = np.random.default_rng(seed)
        if fill == "uniform":
            data = rng.random(shape)
        elif fill == "normal":
            data = rng.standard_normal(shape)
        else:
            raise ValueError(f"unknown random fill {fill!r}")
        return np.ascontiguousarray(data, dtype=dtype)
    return np.full(shape, fill, dtype=dtype)


def flat_index(shape, index):
    """Row-major offset of ``index`` within a tensor of ``shape``."""
    offset = 0
    for extent, i in zip(shape, index):
        offset = offset * extent + i
    return offset


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatchError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def conv_output_size(size, k, stride, pad):
    span = size + 2 * pad - k
    if span < 0 or span % stride:
        raise InvalidGeometryError(
            f"extent {size} with kernel {k}, stride {stride}, pad {pad} is not integral"
        )
    return span // stride + 1


def im2col(x, k, stride=1, pad=0):
    """Unfold receptive fields of ``x`` [N,C,H,W] into columns.

    Returns a matrix of shape [C*k*k, N*H_out*W_out]. Row index is
    (c, i, j) row-major; column index is (n, h, w) row-major.
    """
    n, c, h, w = x.shape
    h_out = conv_output_size(h, k, stride, pad)
    w_out = conv_output_size(w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((c, k, k, n, h_out, w_out), dtype=x.dtype)
    for i in range(k):
        i_end = i + stride * h_out
        for j in range(k):
            j_end = j + stride * w_out
            cols[:, i, j] = x[:, :, i:i_end:stride, j:j_end:stride].transpose(1, 0, 2, 3)
    return cols.reshape(c * k * k, n * h_out * w_out)


def col2im(cols, input_shape, k, stride=1, pad=0):
    """Adjoint of :func:`im2col`: scatter-add columns back onto an image."""
    n, c, h, w = input_shape
    h_out = conv_output_size(h, k, stride, pad)
    w_out = conv_output_size(w, k, stride, pad)
    expected = (c * k * k, n * h_out * w_out)
    if cols.shape != expected:
        raise ShapeMismatchError(f"columns shape {cols.shape} != {expected}")
    cols = cols.reshape(c, k, k, n, h_out, w_out)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        i_end = i + stride * h_out
        for j in range(k):
            j_end = j + stride * w_out
            out[:, :, i:i_end:stride, j:j_end:stride] += cols[:, i, j].transpose(1, 0, 2, 3)
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)
