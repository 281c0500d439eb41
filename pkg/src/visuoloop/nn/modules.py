"""Parameter bookkeeping and the layer helpers shared by the models."""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .tensor import (
    ContractViolation,
    Tensor,
    concat,
    matmul,
    reshape,
    softmax,
    transpose,
)


class Params:
    """Ordered name -> parameter tensor store (single-writer)."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array), requires_grad=True)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def named(self):
        return self._tensors.items()

    def names(self) -> list[str]:
        return list(self._tensors)

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def count(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._tensors.items()}

    def load(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        missing = set(self._tensors) - set(arrays)
        if strict and missing:
            raise ContractViolation(f"missing parameters: {sorted(missing)}")
        for k, t in self._tensors.items():
            if k not in arrays:
                continue
            a = np.asarray(arrays[k], dtype=t.data.dtype)
            if a.shape != t.data.shape:
                raise ContractViolation(f"shape mismatch for {k}: {a.shape} vs {t.data.shape}")
            t.data = a.copy()

    @contextmanager
    def swapped(self, arrays: dict[str, np.ndarray]):
        """Temporarily substitute parameter values (e.g. EMA weights at sampling)."""
        saved = {k: t.data for k, t in self._tensors.items()}
        try:
            self.load(arrays)
            yield
        finally:
            for k, t in self._tensors.items():
                t.data = saved[k]


# -- initializers ---------------------------------------------------------

def xavier_uniform(rng, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    shape = shape or (fan_in, fan_out)
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


def normal_init(rng, shape, std: float = 0.02) -> np.ndarray:
    return rng.normal(shape) * std


# -- layer helpers ----------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    if b is not None:
        y = y + b
    return y


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., L, D) -> (..., heads, L, D/heads)."""
    *lead, L, D = x.shape
    hd = D // heads
    y = reshape(x, (*lead, L, heads, hd))
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return transpose(y, axes)


def merge_heads(x: Tensor) -> Tensor:
    """(..., heads, L, hd) -> (..., L, heads*hd)."""
    *lead, H, L, hd = x.shape
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    y = transpose(x, axes)
    return reshape(y, (*lead, L, H * hd))


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int, mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention over the second-to-last axis.

    q: (..., Lq, D), k/v: (..., Lk, D); mask is an additive (Lq, Lk) array
    (use a large negative constant to block positions).
    """
    d_head = q.shape[-1] // heads
    qh = split_heads(q, heads)
    kh = split_heads(k, heads)
    vh = split_heads(v, heads)
    kt = transpose(kh, tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2))
    scores = matmul(qh, kt) * (1.0 / math.sqrt(d_head))
    if mask is not None:
        scores = scores + mask
    attn = softmax(scores, axis=-1)
    out = matmul(attn, vh)
    return merge_heads(out)


def causal_mask(L: int, dtype=np.float32) -> np.ndarray:
    m = np.zeros((L, L), dtype=dtype)
    m[np.triu_indices(L, k=1)] = -1e9
    return m


def effective_heads(dim: int, requested: int) -> int:
    """Largest divisor of `dim` that does not exceed the requested head count."""
    h = max(1, min(requested, dim))
    while dim % h != 0:
        h -= 1
    return h


def patchify(x: Tensor, patch: int) -> Tensor:
    """(..., C, H, W) -> (..., (H/p)*(W/p), C*p*p) token grid, row-major patches."""
    *lead, C, H, W = x.shape
    p = patch
    hp, wp = H // p, W // p
    y = reshape(x, (*lead, C, hp, p, wp, p))
    n = len(lead)
    y = transpose(y, tuple(range(n)) + (n + 1, n + 3, n, n + 2, n + 4))
    return reshape(y, (*lead, hp * wp, C * p * p))


def unpatchify(tokens: Tensor, channels: int, height: int, width: int, patch: int) -> Tensor:
    """Inverse of patchify for (..., L, C*p*p) -> (..., C, H, W)."""
    *lead, L, _ = tokens.shape
    p = patch
    hp, wp = height // p, width // p
    n = len(lead)
    y = reshape(tokens, (*lead, hp, wp, channels, p, p))
    y = transpose(y, tuple(range(n)) + (n + 2, n, n + 3, n + 1, n + 4))
    return reshape(y, (*lead, channels, height, width))


def mlp2(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor, act) -> Tensor:
    return linear(act(linear(x, w1, b1)), w2, b2)


def stack(tensors, axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)
