"""NumPy reference implementations of the CNN trunk kernels.

Used when the compiled extension is unavailable, and as the comparison
baseline in the kernel benchmark.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b):
    """Valid, stride-1 cross-correlation.

    x: (B, C, H, W), w: (F, C, kh, kw), b: (F,) -> (B, F, H-kh+1, W-kw+1)
    """
    kh, kw = w.shape[2], w.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    y = np.einsum("bchwij,fcij->bfhw", win, w, optimize=True)
    y += b[None, :, None, None]
    return y


def conv2d_backward(x, w, gy):
    """Return (gx, gw, gb) for :func:`conv2d_forward`."""
    kh, kw = w.shape[2], w.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    gw = np.einsum("bfhw,bchwij->fcij", gy, win, optimize=True)
    gb = gy.sum(axis=(0, 2, 3))
    gpad = np.pad(gy, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    gwin = sliding_window_view(gpad, (kh, kw), axis=(2, 3))
    gx = np.einsum("bfhwij,fcij->bchw", gwin, w[:, :, ::-1, ::-1], optimize=True)
    return np.ascontiguousarray(gx), gw, gb


def maxpool2x2_forward(x):
    """2x2 / stride-2 max pooling; odd trailing rows/cols are dropped.

    Returns the pooled array and the flat in-window argmax (0..3) used by
    the backward pass. Ties resolve to the first maximum in row-major order.
    """
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    xc = x[:, :, : 2 * Ho, : 2 * Wo].reshape(B, C, Ho, 2, Wo, 2)
    blocks = xc.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, 4)
    idx = blocks.argmax(axis=-1)
    y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return y, idx.astype(np.int64)


def maxpool2x2_backward(gy, idx, in_shape):
    B, C, H, W = in_shape
    Ho, Wo = gy.shape[2], gy.shape[3]
    blocks = np.zeros((B, C, Ho, Wo, 4))
    np.put_along_axis(blocks, idx[..., None], gy[..., None], axis=-1)
    gx = np.zeros(in_shape)
    gx[:, :, : 2 * Ho, : 2 * Wo] = (
        blocks.reshape(B, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * Ho, 2 * Wo)
    )
    return gx
