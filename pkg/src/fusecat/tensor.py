"""Dense CHW float32 tensors and the numeric kernels layers are built from.

A tensor is a plain ``numpy.ndarray`` of dtype float32 and shape
``(channels, height, width)``; flat vectors are stored as ``(n, 1, 1)``.
All kernels are pure: they never modify their inputs.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidGeometryError, ShapeMismatchError

DTYPE = np.float32

# upper bound on the number of float32 elements in one im2col block
_COL_BLOCK = 1 << 23


def as_tensor(x):
    """Return ``x`` as a C-contiguous float32 CHW array, validating its shape."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1, 1)
    if arr.ndim != 3:
        raise ShapeMismatchError(f"expected a rank-3 CHW tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeMismatchError(f"all tensor dimensions must be >= 1, got {arr.shape}")
    return arr


def output_size(size, window, stride, pad=0, ceil_mode=False):
    """Spatial output length of a sliding window op.

    ``floor((size + 2*pad - window) / stride) + 1``, or the ceiling variant
    used by Caffe-style pooling, where a trailing window that would start
    inside the right padding is dropped.
    """
    if stride < 1:
        raise InvalidGeometryError(f"stride must be >= 1, got {stride}")
    span = size + 2 * pad - window
    if span < 0:
        raise InvalidGeometryError(
            f"window {window} does not fit input of size {size} with pad {pad}")
    if ceil_mode:
        out = -(-span // stride) + 1
        if (out - 1) * stride >= size + pad:
            out -= 1
    else:
        out = span // stride + 1
    return out


def conv2d(x, kernels, bias=None, stride=1, pad=0):
    """2-D cross-correlation with zero padding.

    ``kernels`` has shape ``(out_ch, in_ch, kh, kw)``. The work is done as a
    blocked im2col followed by a single GEMM per block of output rows, which
    keeps the column buffer bounded for large inputs.
    """
    x = as_tensor(x)
    kernels = np.asarray(kernels, dtype=DTYPE)
    if kernels.ndim != 4:
        raise ShapeMismatchError(f"kernels must be rank 4, got shape {kernels.shape}")
    out_ch, in_ch, kh, kw = kernels.shape
    c, h, w = x.shape
    if in_ch != c:
        raise ShapeMismatchError(f"kernels expect {in_ch} input channels, input has {c}")
    oh = output_size(h, kh, stride, pad)
    ow = output_size(w, kw, stride, pad)
    if bias is None:
        bias = np.zeros(out_ch, dtype=DTYPE)
    bias = np.asarray(bias, dtype=DTYPE).reshape(-1)
    if bias.shape[0] != out_ch:
        raise ShapeMismatchError(f"bias has {bias.shape[0]} entries, expected {out_ch}")

    wmat = kernels.reshape(out_ch, -1)
    if kh == 1 and kw == 1 and stride == 1 and pad == 0 and h * w > 1:
        out = wmat @ x.reshape(c, h * w)
        out += bias[:, None]
        return out.reshape(out_ch, oh, ow)

    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    if oh == 1 and ow == 1:
        # same GEMV as fully_connected, so an fc layer and its conv form agree bit for bit
        vec = np.ascontiguousarray(x[:, :kh, :kw]).reshape(-1)
        out = wmat @ vec
        out += bias
        return out.reshape(out_ch, 1, 1)
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride][:, :oh, :ow]
    # (c, oh, ow, kh, kw) -> (c, kh, kw, oh, ow) so rows match the kernel flattening
    windows = windows.transpose(0, 3, 4, 1, 2)

    out = np.empty((out_ch, oh, ow), dtype=DTYPE)
    ksize = c * kh * kw
    rows = max(1, _COL_BLOCK // max(1, ksize * ow))
    for r0 in range(0, oh, rows):
        r1 = min(oh, r0 + rows)
        col = windows[:, :, :, r0:r1].reshape(ksize, (r1 - r0) * ow)
        out[:, r0:r1] = (wmat @ col).reshape(out_ch, r1 - r0, ow)
    out += bias[:, None, None]
    return out


def _pool_windows(x, window, stride, pad, ceil_mode, fill):
    c, h, w = x.shape
    oh = output_size(h, window, stride, pad, ceil_mode)
    ow = output_size(w, window, stride, pad, ceil_mode)
    # pad enough on the bottom/right for ceil-mode windows to fit
    extra_h = max(0, (oh - 1) * stride + window - (h + 2 * pad))
    extra_w = max(0, (ow - 1) * stride + window - (w + 2 * pad))
    if pad or extra_h or extra_w:
        x = np.pad(x, ((0, 0), (pad, pad + extra_h), (pad, pad + extra_w)),
                   constant_values=fill)
    return x, oh, ow


def maxpool2d(x, window, stride, pad=0, ceil_mode=False):
    """Max pooling over square windows; channels are pooled independently.

    Padding (when used) is filled with ``-inf`` so it never wins the max.
    """
    x = as_tensor(x)
    xp, oh, ow = _pool_windows(x, window, stride, pad, ceil_mode, -np.inf)
    out = None
    for dy in range(window):
        for dx in range(window):
            part = xp[:, dy:dy + stride * (oh - 1) + 1:stride,
                      dx:dx + stride * (ow - 1) + 1:stride]
            out = part.copy() if out is None else np.maximum(out, part, out=out)
    return out


def avgpool2d(x, window, stride, pad=0, ceil_mode=False):
    """Average pooling; zero padding counts toward the window size."""
    x = as_tensor(x)
    xp, oh, ow = _pool_windows(x, window, stride, pad, ceil_mode, 0.0)
    acc = np.zeros((x.shape[0], oh, ow), dtype=np.float64)
    for dy in range(window):
        for dx in range(window):
            acc += xp[:, dy:dy + stride * (oh - 1) + 1:stride,
                      dx:dx + stride * (ow - 1) + 1:stride]
    return (acc / (window * window)).astype(DTYPE)


def relu(x):
    return np.maximum(as_tensor(x), 0)


def lrn(x, local_size=5, alpha=1e-4, beta=0.75, k=1.0):
    """Cross-channel local response normalization.

    out[c] = x[c] / (k + alpha/n * sum(x[c']**2 for c' near c)) ** beta,
    with the channel window clipped at the tensor boundary.
    """
    x = as_tensor(x)
    if local_size < 1 or local_size % 2 == 0:
        raise InvalidGeometryError(f"local_size must be odd and >= 1, got {local_size}")
    half = local_size // 2
    sq = x.astype(np.float64) ** 2
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(sq, axis=0)])
    c = x.shape[0]
    hi = np.minimum(np.arange(c) + half + 1, c)
    lo = np.maximum(np.arange(c) - half, 0)
    window_sum = csum[hi] - csum[lo]
    scale = (k + (alpha / local_size) * window_sum) ** beta
    return (x / scale).astype(DTYPE)


def fully_connected(x, weights, bias=None):
    """Dense layer on the flattened input; returns an ``(out_dim, 1, 1)`` tensor."""
    x = as_tensor(x)
    weights = np.asarray(weights, dtype=DTYPE)
    if weights.ndim != 2:
        raise ShapeMismatchError(f"weights must be a matrix, got shape {weights.shape}")
    if weights.shape[1] != x.size:
        raise ShapeMismatchError(
            f"weights expect {weights.shape[1]} inputs, tensor has {x.size} elements")
    out = weights @ x.reshape(-1)
    if bias is not None:
        bias = np.asarray(bias, dtype=DTYPE).reshape(-1)
        if bias.shape[0] != weights.shape[0]:
            raise ShapeMismatchError("bias length does not match output width")
        out += bias
    return out.reshape(-1, 1, 1)


def softmax(x):
    """Softmax over channels at every spatial position.

    For the usual ``(n, 1, 1)`` classifier output this is the softmax of the
    flat vector; for a dense-evaluation grid each position is normalized
    on its own.
    """
    x = as_tensor(x).astype(np.float64)
    e = np.exp(x - x.max(axis=0, keepdims=True))
    return (e / e.sum(axis=0, keepdims=True)).astype(DTYPE)


def concat_channels(inputs):
    tensors = [as_tensor(t) for t in inputs]
    if not tensors:
        raise ShapeMismatchError("concat_channels needs at least one input")
    spatial = tensors[0].shape[1:]
    for t in tensors[1:]:
        if t.shape[1:] != spatial:
            raise ShapeMismatchError(
                f"cannot concatenate spatial sizes {spatial} and {t.shape[1:]}")
    if len(tensors) == 1:
        return tensors[0]
    return np.concatenate(tensors, axis=0)


def conv_output_shape(shape, out_ch, kh, kw, stride=1, pad=0):
    c, h, w = shape
    return (out_ch, output_size(h, kh, stride, pad), output_size(w, kw, stride, pad))


def pool_output_shape(shape, window, stride, pad=0, ceil_mode=False):
    c, h, w = shape
    return (c, output_size(h, window, stride, pad, ceil_mode),
            output_size(w, window, stride, pad, ceil_mode))


def numel(shape):
    return math.prod(shape)
