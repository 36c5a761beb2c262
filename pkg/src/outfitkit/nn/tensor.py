"""Reverse-mode autodiff over float64 numpy arrays.

Every value in the compute graph is a Tensor wrapping an ndarray. Ops build
closures that know how to push a gradient back to their inputs; backward()
walks the graph once in reverse topological order. Single-threaded, no views
are shared between nodes, everything stays float64 so runs are bit-stable.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from ..errors import NumericError, ShapeError

_GRAD_ENABLED = True
_DEBUG_CHECKS = False

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


def set_debug_checks(flag: bool) -> None:
    """Toggle finite-value assertions after every op (slow, for debugging)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(flag)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _as_array(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x.astype(np.float64, copy=False)
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    # extra leading axes first, then axes that were size 1
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _accum(t: "Tensor", g: np.ndarray) -> None:
    # Accumulation always rebinds (never mutates in place), so holding a view
    # of another node's grad here is safe.
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


class Tensor:
    """A node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    # ---- basics ----

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ---- graph plumbing ----

    @staticmethod
    def _make(data: np.ndarray, parents, backward):
        out = Tensor(data)
        if _DEBUG_CHECKS and not np.all(np.isfinite(data)):
            raise NumericError("non-finite values produced by an op")
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad=None) -> None:
        """Accumulate gradients of self w.r.t. every reachable leaf."""
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad)
            if grad.shape != self.data.shape:
                raise ShapeError("seed gradient shape mismatch")
        # iterative topo sort; recursion would overflow on deep graphs
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        _accum(self, grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- arithmetic ----

    @staticmethod
    def _coerce(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other
        data = a.data + b.data

        def bwd(g):
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g, b.data.shape))

        return Tensor._make(data, (a, b), bwd)

    __radd__ = __add__

    def __mul__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other
        data = a.data * b.data

        def bwd(g):
            if a.requires_grad:
                _accum(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * a.data, b.data.shape))

        return Tensor._make(data, (a, b), bwd)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-Tensor._coerce(other))

    def __rsub__(self, other):
        return Tensor._coerce(other) + (-self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return self * (1.0 / float(other))

    def matmul(self, other: "Tensor") -> "Tensor":
        other = Tensor._coerce(other)
        a, b = self, other
        if a.data.ndim < 2 or b.data.ndim < 2:
            raise ShapeError("matmul operands must have ndim >= 2")
        data = np.matmul(a.data, b.data)

        def bwd(g):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                _accum(a, _unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                _accum(b, _unbroadcast(gb, b.data.shape))

        return Tensor._make(data, (a, b), bwd)

    __matmul__ = matmul

    # ---- shape ops ----

    def transpose(self, ax1: int = -2, ax2: int = -1) -> "Tensor":
        data = np.swapaxes(self.data, ax1, ax2)
        src = self

        def bwd(g):
            _accum(src, np.swapaxes(g, ax1, ax2))

        return Tensor._make(data, (src,), bwd)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self
        old = src.data.shape
        data = src.data.reshape(shape)

        def bwd(g):
            _accum(src, g.reshape(old))

        return Tensor._make(data, (src,), bwd)

    def select(self, axis: int, index: int) -> "Tensor":
        """Pick one slice along an axis, dropping that axis."""
        src = self
        data = np.take(src.data, index, axis=axis)

        def bwd(g):
            full = np.zeros_like(src.data)
            sl = [slice(None)] * src.data.ndim
            sl[axis] = index
            full[tuple(sl)] = g
            _accum(src, full)

        return Tensor._make(data, (src,), bwd)

    def slice_axis(self, axis: int, start: int, stop: int) -> "Tensor":
        src = self
        sl = [slice(None)] * src.data.ndim
        sl[axis] = slice(start, stop)
        sl = tuple(sl)
        data = src.data[sl].copy()

        def bwd(g):
            full = np.zeros_like(src.data)
            full[sl] = g
            _accum(src, full)

        return Tensor._make(data, (src,), bwd)

    @staticmethod
    def concat(tensors, axis: int = -1) -> "Tensor":
        tensors = [Tensor._coerce(t) for t in tensors]
        data = np.concatenate([t.data for t in tensors], axis=axis)
        sizes = [t.data.shape[axis] for t in tensors]

        def bwd(g):
            offs = np.cumsum([0] + sizes)
            for t, lo, hi in zip(tensors, offs[:-1], offs[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(lo, hi)
                    _accum(t, g[tuple(sl)])

        return Tensor._make(data, tuple(tensors), bwd)

    @staticmethod
    def stack(tensors, axis: int = 0) -> "Tensor":
        tensors = [Tensor._coerce(t) for t in tensors]
        data = np.stack([t.data for t in tensors], axis=axis)

        def bwd(g):
            for i, t in enumerate(tensors):
                if t.requires_grad:
                    _accum(t, np.take(g, i, axis=axis))

        return Tensor._make(data, tuple(tensors), bwd)

    def gather_rows(self, idx: np.ndarray) -> "Tensor":
        """Index a (n, d) table with an integer array; grad scatter-adds back.

        Repeated indices are allowed and accumulate, which is what lets one
        shared feature matrix feed every slot of a padded batch.
        """
        src = self
        if src.data.ndim != 2:
            raise ShapeError("gather_rows expects a 2-D table")
        idx = np.asarray(idx)
        if not np.issubdtype(idx.dtype, np.integer):
            raise ShapeError("gather_rows needs integer indices")
        data = src.data[idx]

        def bwd(g):
            full = np.zeros_like(src.data)
            np.add.at(full, idx.reshape(-1), g.reshape(-1, src.data.shape[1]))
            _accum(src, full)

        return Tensor._make(data, (src,), bwd)

    # ---- reductions ----

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        src = self
        data = src.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            if axis is None:
                _accum(src, np.broadcast_to(g, src.data.shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(src, np.broadcast_to(g, src.data.shape).copy())

        return Tensor._make(data, (src,), bwd)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.data.size
        elif isinstance(axis, tuple):
            n = int(np.prod([self.data.shape[a] for a in axis]))
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def min(self, axis: int) -> "Tensor":
        """Min over one axis; grad goes to the first argmin (ties break low)."""
        src = self
        data = src.data.min(axis=axis)
        arg = src.data.argmin(axis=axis)

        def bwd(g):
            full = np.zeros_like(src.data)
            idx = list(np.indices(data.shape))
            idx.insert(axis if axis >= 0 else src.data.ndim + axis, arg)
            full[tuple(idx)] = g
            _accum(src, full)

        return Tensor._make(data, (src,), bwd)

    # ---- elementwise ----

    def relu(self) -> "Tensor":
        src = self
        data = np.maximum(src.data, 0.0)

        def bwd(g):
            _accum(src, g * (src.data > 0.0))

        return Tensor._make(data, (src,), bwd)

    def exp(self) -> "Tensor":
        src = self
        data = np.exp(src.data)

        def bwd(g):
            _accum(src, g * data)

        return Tensor._make(data, (src,), bwd)

    def log(self) -> "Tensor":
        src = self
        data = np.log(src.data)

        def bwd(g):
            _accum(src, g / src.data)

        return Tensor._make(data, (src,), bwd)

    def sqrt(self) -> "Tensor":
        """Backward takes the 0 subgradient at x == 0 (true slope is infinite);
        keeps zero-distance corners from manufacturing NaN."""
        src = self
        data = np.sqrt(src.data)

        def bwd(g):
            denom = np.where(data > 0.0, data, 1.0)
            _accum(src, np.where(data > 0.0, g * 0.5 / denom, 0.0))

        return Tensor._make(data, (src,), bwd)

    def power(self, c: float) -> "Tensor":
        """x ** c for a scalar constant c. c == 0 gives exactly 1 with zero grad,
        so a hyperparameter of 0 never manufactures NaN at x == 0."""
        src = self
        c = float(c)
        data = src.data ** c

        def bwd(g):
            if c == 0.0:
                _accum(src, np.zeros_like(src.data))
                return
            _accum(src, g * c * src.data ** (c - 1.0))

        return Tensor._make(data, (src,), bwd)

    def sigmoid(self) -> "Tensor":
        src = self
        x = src.data
        data = np.empty_like(x)
        pos = x >= 0
        data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        data[~pos] = ex / (1.0 + ex)

        def bwd(g):
            _accum(src, g * data * (1.0 - data))

        return Tensor._make(data, (src,), bwd)

    def gelu(self) -> "Tensor":
        # tanh approximation; exact erf form differs in the 4th decimal
        src = self
        x = src.data
        inner = _SQRT_2_OVER_PI * (x + _GELU_CUBIC * x ** 3)
        t = np.tanh(inner)
        data = 0.5 * x * (1.0 + t)

        def bwd(g):
            dinner = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_CUBIC * x ** 2)
            local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner
            _accum(src, g * local)

        return Tensor._make(data, (src,), bwd)

    def clip(self, lo: float, hi: float) -> "Tensor":
        """Clamp values; gradient passes through wherever x is inside [lo, hi]."""
        src = self
        data = np.clip(src.data, lo, hi)

        def bwd(g):
            mask = (src.data >= lo) & (src.data <= hi)
            _accum(src, g * mask)

        return Tensor._make(data, (src,), bwd)

    def softmax(self, axis: int = -1) -> "Tensor":
        src = self
        shifted = src.data - src.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        data = e / e.sum(axis=axis, keepdims=True)

        def bwd(g):
            dot = (g * data).sum(axis=axis, keepdims=True)
            _accum(src, data * (g - dot))

        return Tensor._make(data, (src,), bwd)

    def layer_norm(self, gamma: "Tensor", beta: "Tensor", eps: float = 1e-5) -> "Tensor":
        """Normalize over the last axis, then scale and shift."""
        src = self
        x = src.data
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * inv
        data = xhat * gamma.data + beta.data

        def bwd(g):
            if gamma.requires_grad:
                axes = tuple(range(g.ndim - 1))
                _accum(gamma, (g * xhat).sum(axis=axes))
            if beta.requires_grad:
                axes = tuple(range(g.ndim - 1))
                _accum(beta, g.sum(axis=axes))
            if src.requires_grad:
                dxhat = g * gamma.data
                m1 = dxhat.mean(axis=-1, keepdims=True)
                m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
                _accum(src, inv * (dxhat - m1 - xhat * m2))

        return Tensor._make(data, (src, gamma, beta), bwd)

    # ---- convolution (valid padding, stride 1) ----

    def conv2d(self, kernel: "Tensor") -> "Tensor":
        """x: (B, C, H, W) with kernel (O, C, kh, kw) -> (B, O, H-kh+1, W-kw+1)."""
        src = self
        x, w = src.data, kernel.data
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError("conv2d expects (B,C,H,W) input and (O,C,kh,kw) kernel")
        B, C, H, W = x.shape
        O, _, kh, kw = w.shape
        oh, ow = H - kh + 1, W - kw + 1
        win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B, oh * ow, C * kh * kw)
        wmat = w.reshape(O, C * kh * kw)
        out = np.matmul(cols, wmat.T)                       # (B, oh*ow, O)
        data = out.transpose(0, 2, 1).reshape(B, O, oh, ow)

        def bwd(g):
            gmat = g.reshape(B, O, oh * ow).transpose(0, 2, 1)   # (B, oh*ow, O)
            if kernel.requires_grad:
                dw = np.einsum("bno,bnk->ok", gmat, cols)
                _accum(kernel, dw.reshape(O, C, kh, kw))
            if src.requires_grad:
                dcols = np.matmul(gmat, wmat)                    # (B, oh*ow, C*kh*kw)
                dcols = dcols.reshape(B, oh, ow, C, kh, kw).transpose(0, 3, 4, 5, 1, 2)
                dx = np.zeros_like(x)
                for i in range(kh):
                    for j in range(kw):
                        dx[:, :, i:i + oh, j:j + ow] += dcols[:, :, i, j]
                _accum(src, dx)

        return Tensor._make(data, (src, kernel), bwd)
