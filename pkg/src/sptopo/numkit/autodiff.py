"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every differentiable quantity is a :class:`Var`. Operations build a DAG of
``Var`` nodes; :meth:`Var.backward` walks it once in reverse topological order
and accumulates gradients into ``Var.grad``. Constants (plain arrays, scipy
sparse matrices, python floats) may be mixed in freely and receive no
gradient.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionError

__all__ = [
    "Var",
    "as_var",
    "value_of",
    "matmul",
    "spmm",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "relu",
    "sigmoid",
    "clamp",
    "square",
    "sum",
    "mean",
    "transpose",
    "reshape",
    "take_rows",
    "concat_cols",
    "column",
    "softmax_rows",
    "logsumexp_rows",
    "row_normalize",
    "conv2d_maxpool",
    "conv2d_maxpool_batch",
]


class Var:
    """A node on the tape: forward value, gradient slot, and how to backprop."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "op", "name")

    def __init__(self, value, parents: Sequence["Var"] = (), backward_fn=None, op="leaf", name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.backward_fn: Callable | None = backward_fn
        self.op = op
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = self.name or self.op
        return f"Var({label}, shape={self.value.shape})"

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        """Accumulate d(self)/d(node) into ``node.grad`` for every ancestor."""
        order = _topological_order(self)
        for node in order:
            node.grad = None
        if seed is None:
            if self.value.size != 1:
                raise DimensionError(f"backward() needs a seed for non-scalar output of shape {self.value.shape}")
            seed = np.ones_like(self.value)
        self.grad = np.asarray(seed, dtype=np.float64).reshape(self.value.shape).copy()
        for node in reversed(order):
            if node.backward_fn is None or node.grad is None:
                continue
            parent_grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, parent_grads):
                if parent is None or g is None:
                    continue
                g = _unbroadcast(np.asarray(g, dtype=np.float64), parent.value.shape)
                if parent.grad is None:
                    parent.grad = g.copy()
                else:
                    parent.grad = parent.grad + g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self):
        return transpose(self)


def _topological_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p is not None and id(p) not in seen:
                stack.append((p, False))
    return order


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x, op="const")


def value_of(x):
    """Forward value of a ``Var``, or ``x`` itself for constants."""
    return x.value if isinstance(x, Var) else x


_val = value_of


def _node(value, parents, backward_fn, op):
    parents = tuple(p if isinstance(p, Var) else None for p in parents)
    if all(p is None for p in parents):
        return Var(value, op="const")
    return Var(value, parents, backward_fn, op)


# elementwise arithmetic

def add(a, b) -> Var:
    return _node(_val(a) + _val(b), (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Var:
    return _node(_val(a) - _val(b), (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    return _node(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def div(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = av / bv
    return _node(out, (a, b), lambda g: (g / bv, -g * out / bv), "div")


def neg(a) -> Var:
    return _node(-_val(a), (a,), lambda g: (-g,), "neg")


def square(a) -> Var:
    av = _val(a)
    return _node(av * av, (a,), lambda g: (2.0 * g * av,), "square")


def exp(a) -> Var:
    out = np.exp(_val(a))
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Var:
    av = _val(a)
    return _node(np.log(av), (a,), lambda g: (g / av,), "log")


def relu(a) -> Var:
    av = _val(a)
    # subgradient at 0 is 0; NaN passes through so divergence stays visible
    mask = av > 0
    return _node(np.maximum(av, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a) -> Var:
    av = _val(a)
    out = np.empty_like(av, dtype=np.float64)
    pos = av >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
    e = np.exp(av[~pos])
    out[~pos] = e / (1.0 + e)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def clamp(a, lo=None, hi=None) -> Var:
    """Clip to ``[lo, hi]``; gradient is zero where the clip is active."""
    av = _val(a)
    out = np.clip(av, lo, hi)
    inside = np.ones(av.shape, dtype=bool)
    if lo is not None:
        inside &= av >= lo
    if hi is not None:
        inside &= av <= hi
    return _node(out, (a,), lambda g: (g * inside,), "clamp")


# reductions and shape ops

def sum(a, axis=None, keepdims=False) -> Var:  # noqa: A001 - mirrors numpy
    av = _val(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape),)

    return _node(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Var:
    av = _val(a)
    count = av.size if axis is None else av.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def transpose(a) -> Var:
    return _node(_val(a).T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Var:
    av = _val(a)
    return _node(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),), "reshape")


def take_rows(a, index) -> Var:
    """Gather rows ``a[index]``; backward scatter-adds into the source rows."""
    av = _val(a)
    index = np.asarray(index, dtype=np.intp)

    def backward(g):
        out = np.zeros_like(av)
        np.add.at(out, index, g)
        return (out,)

    return _node(av[index], (a,), backward, "take_rows")


def column(a, j: int) -> Var:
    av = _val(a)

    def backward(g):
        out = np.zeros_like(av)
        out[:, j : j + 1] = g
        return (out,)

    return _node(av[:, j : j + 1], (a,), backward, "column")


def concat_cols(parts: Sequence) -> Var:
    values = [np.atleast_2d(_val(p)) for p in parts]
    widths = np.cumsum([0] + [v.shape[1] for v in values])

    def backward(g):
        return tuple(g[:, widths[i] : widths[i + 1]] for i in range(len(values)))

    return _node(np.concatenate(values, axis=1), tuple(parts), backward, "concat_cols")


# linear algebra

def matmul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    return _node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def spmm(adjacency: sp.spmatrix, b) -> Var:
    """Constant sparse matrix times a dense ``Var``."""
    bv = _val(b)
    if adjacency.shape[1] != bv.shape[0]:
        raise DimensionError(f"spmm shape mismatch: {adjacency.shape} x {bv.shape}")
    at = adjacency.T.tocsr()
    return _node(np.asarray(adjacency @ bv), (None, b), lambda g: (None, np.asarray(at @ g)), "spmm")


# row-wise operators

def softmax_rows(a) -> Var:
    av = _val(a)
    if av.size == 0:
        raise DimensionError("softmax_rows of an empty matrix")
    z = av - av.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _node(out, (a,), backward, "softmax_rows")


def logsumexp_rows(a) -> Var:
    av = _val(a)
    m = av.max(axis=1, keepdims=True)
    e = np.exp(av - m)
    s = e.sum(axis=1, keepdims=True)
    out = m + np.log(s)
    soft = e / s
    return _node(out, (a,), lambda g: (g * soft,), "logsumexp_rows")


def row_normalize(a) -> Var:
    """Scale each row to unit L2 norm; all-zero rows stay zero."""
    av = _val(a)
    norms = np.sqrt((av * av).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    out = av / safe

    def backward(g):
        proj = (g * out).sum(axis=1, keepdims=True)
        return ((g - out * proj) / safe,)

    return _node(out, (a,), backward, "row_normalize")


# convolution

def conv2d_maxpool_batch(images, kernels, bias, stride: int = 1, pool: int = 1) -> Var:
    """Valid cross-correlation + bias, ReLU, then non-overlapping max pooling.

    ``images`` is (n, H, W), ``kernels`` (c, k, k), ``bias`` (c,). Returns
    (n, c, H', W') where ragged pooling edges are truncated.
    """
    img = _val(images)
    ker = _val(kernels)
    b = _val(bias).reshape(-1)
    if img.ndim != 3 or ker.ndim != 3 or ker.shape[1] != ker.shape[2]:
        raise DimensionError(f"conv2d expects (n,H,W) images and (c,k,k) kernels, got {img.shape}, {ker.shape}")
    n, height, width = img.shape
    c, k, _ = ker.shape
    if k > height or k > width:
        raise DimensionError(f"kernel {k}x{k} larger than image {height}x{width}")
    if stride < 1 or pool < 1:
        raise DimensionError("stride and pool must be >= 1")
    oh = (height - k) // stride + 1
    ow = (width - k) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(img, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    patches = windows.reshape(n, oh, ow, k * k)
    kflat = ker.reshape(c, k * k)
    pre = patches @ kflat.T + b  # (n, oh, ow, c)
    act = np.maximum(pre, 0.0)
    qh, qw = oh // pool, ow // pool
    if qh == 0 or qw == 0:
        raise DimensionError(f"pool {pool} larger than conv output {oh}x{ow}")
    blocks = act[:, : qh * pool, : qw * pool].reshape(n, qh, pool, qw, pool, c)
    blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, qh, qw, c, pool * pool)
    arg = blocks.argmax(axis=-1)
    pooled = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    out = pooled.transpose(0, 3, 1, 2)

    def backward(g):
        g = g.transpose(0, 2, 3, 1)  # (n, qh, qw, c)
        gblocks = np.zeros((n, qh, qw, c, pool * pool))
        np.put_along_axis(gblocks, arg[..., None], g[..., None], axis=-1)
        gblocks = gblocks.reshape(n, qh, qw, c, pool, pool).transpose(0, 1, 4, 2, 5, 3)
        gact = np.zeros((n, oh, ow, c))
        gact[:, : qh * pool, : qw * pool] = gblocks.reshape(n, qh * pool, qw * pool, c)
        gpre = gact * (pre > 0)
        gker = np.einsum("nijp,nijc->cp", patches, gpre).reshape(c, k, k)
        gbias = gpre.sum(axis=(0, 1, 2)).reshape(_val(bias).shape)
        gimg = None
        if isinstance(images, Var):
            gpatch = (gpre @ kflat).reshape(n, oh, ow, k, k)
            gimg = np.zeros_like(img)
            for m in range(k):
                for q in range(k):
                    gimg[:, m : m + stride * oh : stride, q : q + stride * ow : stride] += gpatch[:, :, :, m, q]
        return gimg, gker, gbias

    return _node(out, (images, kernels, bias), backward, "conv2d_maxpool")


def conv2d_maxpool(img, kernel, bias=0.0, stride: int = 1, pool: int = 1) -> Var:
    """Single-channel, single-image form of :func:`conv2d_maxpool_batch`."""
    iv, kv = _val(img), _val(kernel)
    if iv.ndim != 2 or kv.ndim != 2 or kv.shape[0] != kv.shape[1]:
        raise DimensionError(f"conv2d_maxpool expects a 2-D image and square kernel, got {iv.shape}, {kv.shape}")
    out = conv2d_maxpool_batch(
        reshape(img, (1,) + iv.shape) if isinstance(img, Var) else iv[None],
        reshape(kernel, (1,) + kv.shape) if isinstance(kernel, Var) else kv[None],
        reshape(bias, (1,)) if isinstance(bias, Var) else np.array([bias], dtype=np.float64),
        stride=stride,
        pool=pool,
    )
    return reshape(out, out.shape[2:])
