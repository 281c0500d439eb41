"""Dense tensors with reverse-mode autodiff on top of numpy.

Graphs are built dynamically: every op records its parents and a backward
closure on the output tensor. `backward()` on a scalar walks the graph in
reverse topological order and accumulates gradients into leaf tensors.

The mathematical primitive set is deliberately small (matmul, add, mul,
elementwise nonlinearities, softmax, mean/sum, concat, slice, layer norm);
everything else in the models is composed from it. Structural ops (reshape,
transpose, gather/embedding) rearrange values without changing them and are
covered by the same finite-difference checks.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager

import numpy as np
from scipy.special import expit as _scipy_expit


def _expit(x: np.ndarray) -> np.ndarray:
    return _scipy_expit(x)


class ContractViolation(ValueError):
    """An operation was called outside its stated contract."""


class NumericFault(ArithmeticError):
    """A non-finite value appeared where the contract requires finite ones."""


_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_NAN_CHECKS = False
_node_ids = itertools.count()


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractViolation(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


def set_nan_checks(enabled: bool) -> None:
    """Check every gradient for NaN during backward (slow; off by default)."""
    global _NAN_CHECKS
    _NAN_CHECKS = bool(enabled)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "node_id")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.node_id = next(_node_ids)

    # -- introspection ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, pow_const(other, -1.0))
        return mul(self, 1.0 / np.asarray(other))

    def __rtruediv__(self, other):
        return mul(pow_const(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_const(self, p)

    def __getitem__(self, idx):
        return take_slice(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def backward(self):
        return backward(self)


def _wrap_const(x, like: np.ndarray | None = None) -> np.ndarray:
    """Plain numpy view of a non-Tensor operand, matched to the peer dtype."""
    arr = np.asarray(x)
    if like is not None and arr.dtype != like.dtype:
        arr = arr.astype(like.dtype)
    return arr


def _result(data: np.ndarray, parents, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    out.node_id = next(_node_ids)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic primitives --------------------------------------------------

def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if isinstance(b, Tensor):
        data = a.data + b.data
        sa, sb = a.data.shape, b.data.shape

        def back(g):
            return _unbroadcast(g, sa), _unbroadcast(g, sb)

        return _result(data, (a, b), back)
    c = _wrap_const(b, a.data)
    data = a.data + c
    sa = a.data.shape
    return _result(data, (a,), lambda g: (_unbroadcast(g, sa),))


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if isinstance(b, Tensor):
        data = a.data * b.data
        ad, bd = a.data, b.data

        def back(g):
            return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

        return _result(data, (a, b), back)
    c = _wrap_const(b, a.data)
    data = a.data * c
    sa = a.data.shape
    return _result(data, (a,), lambda g: (_unbroadcast(g * c, sa),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if not isinstance(a, Tensor):
        a = Tensor(a)
    if not isinstance(b, Tensor):
        b = Tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ContractViolation("matmul requires ndim >= 2 operands; reshape vectors first")

    if bd.ndim == 2 and ad.ndim > 2:
        # Stacked-batch x weight-matrix: run one flat GEMM instead of a
        # batched matmul, and accumulate the weight gradient without the
        # (batch, in, out) temporary a broadcast backward would allocate.
        k = ad.shape[-1]
        a2 = ad.reshape(-1, k)
        data = (a2 @ bd).reshape(*ad.shape[:-1], bd.shape[-1])

        def back(g):
            g2 = np.ascontiguousarray(g).reshape(-1, bd.shape[-1])
            ga = (g2 @ bd.T).reshape(ad.shape)
            gb = a2.T @ g2
            return ga, gb

        return _result(data, (a, b), back)

    data = np.matmul(ad, bd)

    def back(g):
        ga = _unbroadcast(np.matmul(g, bd.swapaxes(-1, -2)), ad.shape)
        gb = _unbroadcast(np.matmul(ad.swapaxes(-1, -2), g), bd.shape)
        return ga, gb

    return _result(data, (a, b), back)


def pow_const(x: Tensor, p: float) -> Tensor:
    xd = x.data
    data = xd ** p
    return _result(data, (x,), lambda g: (g * (p * xd ** (p - 1.0)),))


# -- elementwise nonlinearities ----------------------------------------------

def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)
    return _result(data, (x,), lambda g: (g * (data > 0),))


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)
    return _result(data, (x,), lambda g: (g * data,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _result(np.log(xd), (x,), lambda g: (g / xd,))


def sqrt(x: Tensor) -> Tensor:
    data = np.sqrt(x.data)
    return _result(data, (x,), lambda g: (g * (0.5 / data),))


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)
    return _result(data, (x,), lambda g: (g * (1.0 - data * data),))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    data = _expit(xd)
    return _result(data, (x,), lambda g: (g * (data * (1.0 - data)),))


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), numerically stable; grad is sigmoid(x)."""
    xd = x.data
    data = np.logaddexp(0.0, xd).astype(xd.dtype)
    return _result(data, (x,), lambda g: (g * _expit(xd),))


def absolute(x: Tensor) -> Tensor:
    xd = x.data
    return _result(np.abs(xd), (x,), lambda g: (g * np.sign(xd),))


def silu(x: Tensor) -> Tensor:
    return mul(x, sigmoid(x))


def floor_stopgrad(x: Tensor) -> Tensor:
    """Floor with zero gradient (piecewise constant)."""
    return _result(np.floor(x.data), (x,), lambda g: (np.zeros_like(x.data),))


def clip_passthrough(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes where the input is strictly inside [lo, hi]."""
    xd = x.data
    data = np.clip(xd, lo, hi)
    mask = (xd > lo) & (xd < hi)
    return _result(data, (x,), lambda g: (g * mask,))


# -- reductions / normalization -----------------------------------------------

def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    xd = x.data
    data = xd.sum(axis=axis, keepdims=keepdims)
    if not isinstance(data, np.ndarray):
        data = np.asarray(data, dtype=xd.dtype)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, xd.shape).astype(xd.dtype, copy=False),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, xd.shape),)

    return _result(data, (x,), back)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    xd = x.data
    if axis is None:
        n = xd.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= xd.shape[ax]
    s = reduce_sum(x, axis, keepdims)
    return mul(s, 1.0 / n)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - dot),)

    return _result(data, (x,), back)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    xd = x.data
    mean = xd.mean(axis=-1, keepdims=True)
    centered = xd - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv

    def back(g):
        m1 = g.mean(axis=-1, keepdims=True)
        m2 = (g * xhat).mean(axis=-1, keepdims=True)
        return ((g - m1 - xhat * m2) * inv,)

    return _result(xhat.astype(xd.dtype, copy=False), (x,), back)


# -- structural ops -----------------------------------------------------------

def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        return tuple(np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis) for i in range(len(sizes)))

    return _result(data, tuple(tensors), back)


def take_slice(x: Tensor, idx) -> Tensor:
    xd = x.data
    data = xd[idx]

    def back(g):
        full = np.zeros_like(xd)
        full[idx] = g
        return (full,)

    return _result(data, (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    xd = x.data
    old = xd.shape
    return _result(xd.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes) -> Tensor:
    xd = x.data
    inv = np.argsort(axes)
    return _result(xd.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def embedding(table: Tensor, idx) -> Tensor:
    """Row lookup: out[..., :] = table[idx[...], :]."""
    idx = np.asarray(idx, dtype=np.int64)
    td = table.data
    data = td[idx]

    def back(g):
        gt = np.zeros_like(td)
        np.add.at(gt, idx, g)
        return (gt,)

    return _result(data, (table,), back)


def gather_last(src: Tensor, idx: np.ndarray) -> Tensor:
    """out[n, j] = src[n, idx[n, j]] for 2-D src/idx; backward scatter-adds."""
    sd = src.data
    if sd.ndim != 2 or idx.ndim != 2 or sd.shape[0] != idx.shape[0]:
        raise ContractViolation(f"gather_last expects matching 2-D inputs, got {sd.shape} / {idx.shape}")
    n, m = sd.shape
    data = np.take_along_axis(sd, idx, axis=1)

    def back(g):
        flat = (np.arange(n)[:, None] * m + idx).ravel()
        gs = np.bincount(flat, weights=g.ravel().astype(np.float64), minlength=n * m)
        return (gs.reshape(n, m).astype(sd.dtype),)

    return _result(data, (src,), back)


# -- reverse pass --------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.node_id not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor) -> dict[int, np.ndarray]:
    """Reverse-mode sweep from a scalar output.

    Accumulates into `.grad` of every reachable leaf (a tensor with
    requires_grad and no parents) and returns {node_id: gradient} for those
    leaves.
    """
    if output.data.size != 1:
        raise ContractViolation(f"backward requires a scalar output, got shape {output.data.shape}")
    if not output.requires_grad:
        return {}
    grads: dict[int, np.ndarray] = {output.node_id: np.ones_like(output.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(_topo_order(output)):
        g = grads.pop(node.node_id, None)
        if g is None:
            continue
        if _NAN_CHECKS and (not np.all(np.isfinite(g)) or not np.all(np.isfinite(node.data))):
            raise NumericFault(f"non-finite value or gradient at node {node.node_id}")
        if node._backward is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
                leaves[node.node_id] = node
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p.node_id in grads:
                grads[p.node_id] = grads[p.node_id] + pg
            else:
                grads[p.node_id] = pg
    return {nid: t.grad for nid, t in leaves.items()}
