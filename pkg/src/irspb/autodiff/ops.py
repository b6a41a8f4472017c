"""Differentiable primitives.

Complex quantities are carried as real tensors whose last axis has length 2
(real part, imaginary part). The ``c*`` functions operate on that layout.
"""

import numpy as np

from .. import _kernels
from .tensor import Tensor, as_tensor, make_node


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    nlead = g.ndim - len(shape)
    if nlead:
        g = g.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ---------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return make_node(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add",
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return make_node(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub",
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return make_node(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul",
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return make_node(
        out, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def neg(a):
    return make_node(-a.data, (a,), lambda g: (-g,), "neg")


def square(a):
    a = as_tensor(a)
    return make_node(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def sqrt(a):
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def log2(a):
    return make_node(np.log2(a.data), (a,), lambda g: (g / (a.data * np.log(2.0)),), "log2")


def relu(a):
    mask = a.data > 0
    return make_node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a):
    out = np.tanh(a.data)
    return make_node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


# -- reductions and shape ------------------------------------------------------

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    out = a.data.reshape(shape)
    return make_node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def flatten(a, start=1):
    """Collapse all axes from ``start`` on into one."""
    return reshape(a, a.shape[:start] + (-1,))


def transpose(a, axes):
    inv = np.argsort(axes)
    return make_node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def _is_basic_index(key):
    items = key if isinstance(key, tuple) else (key,)
    return all(k is Ellipsis or k is None or isinstance(k, (slice, int, np.integer)) for k in items)


def getitem(a, key):
    basic = _is_basic_index(key)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return make_node(a.data[key], (a,), bw, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ValueError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(out, tensors, bw, "concat")


# -- linear algebra ------------------------------------------------------------

def matmul(a, b):
    """Batched matrix product with NumPy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_node(out, (a, b), bw, "matmul")


def linear(x, weight, bias=None):
    """``x @ weight + bias``; weight is (in, out) or batched (..., in, out)."""
    if x.shape[-1] != weight.shape[-2]:
        raise ValueError(f"linear: input {x.shape} does not match weight {weight.shape}")
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


# -- CNN layers ----------------------------------------------------------------

def conv2d(x, filters, bias):
    """Valid, stride-1 2-D convolution. x: (B, C, H, W), filters: (F, C, kh, kw)."""
    x, filters, bias = as_tensor(x), as_tensor(filters), as_tensor(bias)
    if x.ndim != 4 or filters.ndim != 4 or x.shape[1] != filters.shape[1]:
        raise ValueError(f"conv2d: incompatible shapes {x.shape} and {filters.shape}")
    if x.shape[2] < filters.shape[2] or x.shape[3] < filters.shape[3]:
        raise ValueError(f"conv2d: kernel {filters.shape[2:]} larger than image {x.shape[2:]}")
    out = _kernels.conv2d_forward(x.data, filters.data, bias.data)

    def bw(g):
        return _kernels.conv2d_backward(x.data, filters.data, g)

    return make_node(out, (x, filters, bias), bw, "conv2d")


def maxpool2d(x):
    """2x2 max pooling, stride 2."""
    if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
        raise ValueError(f"maxpool2d: need (B, C, H>=2, W>=2), got {x.shape}")
    out, idx = _kernels.maxpool2x2_forward(x.data)
    return make_node(out, (x,), lambda g: (_kernels.maxpool2x2_backward(g, idx, x.shape),), "maxpool2d")


def lstm_cell(x, h, c, w_x, w_h, b):
    """One LSTM step with gate order (input, forget, cell, output).

    w_x: (D, 4H), w_h: (H, 4H), b: (4H,). Returns (h_next, c_next).
    """
    hid = h.shape[-1]
    if w_x.shape[-1] != 4 * hid or w_h.shape != (hid, 4 * hid):
        raise ValueError(f"lstm_cell: weights {w_x.shape}, {w_h.shape} do not fit hidden size {hid}")
    z = add(add(matmul(x, w_x), matmul(h, w_h)), b)
    i = sigmoid(z[..., :hid])
    f = sigmoid(z[..., hid:2 * hid])
    gcell = tanh(z[..., 2 * hid:3 * hid])
    o = sigmoid(z[..., 3 * hid:])
    c_next = add(mul(f, c), mul(i, gcell))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


# -- complex pairs (last axis = re, im) ----------------------------------------

def _to_complex(a):
    return a[..., 0] + 1j * a[..., 1]


def _to_pair(z):
    return np.stack([z.real, z.imag], axis=-1)


def _apply_op(A, op):
    if op is None:
        return A
    At = np.swapaxes(A, -1, -2)
    return np.conj(At) if op == "H" else At


def cmatmul(a, b, op_a=None):
    """Complex product ``op(a) @ b`` on (..., m, n, 2) pairs; ``op_a`` is None, "T" or "H"."""
    if op_a not in (None, "T", "H"):
        raise ValueError(f"cmatmul: unknown op {op_a!r}")
    a, b = as_tensor(a), as_tensor(b)
    A, B = _to_complex(a.data), _to_complex(b.data)
    X = _apply_op(A, op_a)
    if X.shape[-1] != B.shape[-2]:
        raise ValueError(f"cmatmul: incompatible shapes {a.shape} and {b.shape} (op {op_a})")
    C = X @ B

    def bw(g):
        G = _to_complex(g)
        ga = gb = None
        if a.requires_grad:
            gX = G @ np.conj(np.swapaxes(B, -1, -2))
            ga = _unbroadcast(_to_pair(_apply_op(gX, op_a)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(_to_pair(np.conj(np.swapaxes(X, -1, -2)) @ G), b.shape)
        return ga, gb

    return make_node(_to_pair(C), (a, b), bw, "cmatmul")


def cabs2(a):
    """|z|^2 of a complex pair tensor; drops the trailing axis."""
    return sum(square(a), axis=-1)


def unit_modulus(a, eps=1e-12):
    """Elementwise z / |z|; entries with |z| < eps map to 1 + 0j (zero gradient)."""
    a = as_tensor(a)
    re, im = a.data[..., 0], a.data[..., 1]
    mag = np.hypot(re, im)
    small = mag < eps
    safe = np.where(small, 1.0, mag)
    out = np.stack([np.where(small, 1.0, re / safe), np.where(small, 0.0, im / safe)], axis=-1)

    def bw(g):
        gr, gi = g[..., 0], g[..., 1]
        m3 = safe ** 3
        dre = (im * im * gr - re * im * gi) / m3
        dim = (re * re * gi - re * im * gr) / m3
        grad = np.stack([dre, dim], axis=-1)
        grad[small] = 0.0
        return (grad,)

    return make_node(out, (a,), bw, "unit_modulus")


def power_project(w, budget, axes):
    """Scale ``w`` so that its squared norm over ``axes`` is at most ``budget``.

    Inside the budget the map is the identity; outside it rescales onto the
    sphere of radius sqrt(budget). ``budget`` is a scalar or broadcasts against
    the keepdims-reduced shape.
    """
    w = as_tensor(w)
    total = np.sum(w.data * w.data, axis=axes, keepdims=True)
    budget = np.broadcast_to(np.asarray(budget, dtype=np.float64), total.shape)
    over = total > budget
    scale = np.where(over, np.sqrt(budget / np.where(over, total, 1.0)), 1.0)
    out = w.data * scale

    def bw(g):
        inner = np.sum(w.data * g, axis=axes, keepdims=True)
        corr = np.where(over, w.data * inner / np.where(over, total, 1.0), 0.0)
        return (scale * (g - corr),)

    return make_node(out, (w,), bw, "power_project")


__all__ = [
    "Tensor", "add", "sub", "mul", "div", "neg", "square", "sqrt", "log2", "relu", "sigmoid",
    "tanh", "sum", "mean", "reshape", "flatten", "transpose", "getitem", "concat", "matmul",
    "linear", "conv2d", "maxpool2d", "lstm_cell", "cmatmul", "cabs2", "unit_modulus",
    "power_project",
]
