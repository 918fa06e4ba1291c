"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

Everything trainable in the package flows through the :class:`Tensor` graph
built here.  The op set is deliberately small: elementwise arithmetic with
broadcasting, matmul, the usual nonlinearities, concatenation/slicing, a
stable softmax, cosine similarity (vector, row-wise and cross forms) and a
fused LSTM cell.  Backward passes are hand-derived and checked against the
central-difference oracle in :mod:`teachbot.gradcheck`.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError

_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (pure inference)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar output through the graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.requires_grad else 'no'})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topo_order(root: Tensor) -> list[Tensor]:
    # Iterative post-order DFS; dialog-length graphs overflow recursion.
    order: list[Tensor] = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if p.requires_grad and id(p) not in visited:
                visited.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents),
                      backward=backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise arithmetic ------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, -g)

    return _node(-a.data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise ValueError("matmul requires 1-d or 2-d operands")
    out = a.data @ b.data
    an, bn = a.data.ndim, b.data.ndim

    def backward(g):
        if an == 1 and bn == 1:            # dot product -> scalar
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)
        elif an == 1:                      # (n,) @ (n,m) -> (m,)
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))
        elif bn == 1:                      # (n,m) @ (m,) -> (n,)
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)
        else:                              # (n,k) @ (k,m)
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)

    return _node(out, (a, b), backward)


# -- nonlinearities --------------------------------------------------------

def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - y * y))

    return _node(y, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)

    def backward(g):
        _accumulate(a, g * y * (1.0 - y))

    return _node(y, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * y)

    return _node(y, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g / a.data)

    return _node(np.log(a.data), (a,), backward)


def clip_min(a: Tensor, lo: float) -> Tensor:
    """Elementwise max(a, lo); gradient passes only where a > lo."""
    mask = a.data > lo

    def backward(g):
        _accumulate(a, g * mask)

    return _node(np.maximum(a.data, lo), (a,), backward)


# -- reductions and reshaping ----------------------------------------------

def tsum(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis),
                                           a.data.shape).copy())

    return _node(out, (a,), backward)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-d tensors into one vector."""
    parts = list(parts)
    if not parts:
        raise ValueError("concat of zero parts")
    out = np.concatenate([p.data for p in parts])
    sizes = [p.data.shape[0] for p in parts]

    def backward(g):
        off = 0
        for p, n in zip(parts, sizes):
            _accumulate(p, g[off:off + n])
            off += n

    return _node(out, tuple(parts), backward)


def stack_rows(rows: Sequence[Tensor], width: int | None = None) -> Tensor:
    """Stack 1-d tensors into a matrix; `width` sizes the empty case."""
    rows = list(rows)
    if not rows:
        if width is None:
            raise ValueError("stack_rows of zero rows needs an explicit width")
        return Tensor(np.zeros((0, width)))
    out = np.stack([r.data for r in rows])

    def backward(g):
        for i, r in enumerate(rows):
            _accumulate(r, g[i])

    return _node(out, tuple(rows), backward)


def append_broadcast_cols(m: Tensor, row: Tensor) -> Tensor:
    """Append `row` (B,) to every row of `m` (R,K) as B extra columns."""
    r, k = m.data.shape
    out = np.concatenate([m.data, np.broadcast_to(row.data, (r, row.data.shape[0]))],
                         axis=1)

    def backward(g):
        _accumulate(m, g[:, :k])
        _accumulate(row, g[:, k:].sum(axis=0))

    return _node(out, (m, row), backward)


def getitem(a: Tensor, key) -> Tensor:
    out = a.data[key]
    if isinstance(out, np.ndarray):
        out = out.copy()

    def backward(g):
        if not a.requires_grad:
            return
        buf = np.zeros_like(a.data)
        np.add.at(buf, key, g)
        _accumulate(a, buf)

    return _node(np.asarray(out), (a,), backward)


# -- softmax and cosine ----------------------------------------------------

def softmax(logits: Tensor) -> Tensor:
    """Numerically stable softmax of a 1-d tensor."""
    x = logits.data
    if x.ndim != 1 or x.size == 0:
        raise ValueError("softmax expects a non-empty 1-d tensor")
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax input is not finite")
    y = np.exp(x - x.max())
    y /= y.sum()

    def backward(g):
        _accumulate(logits, y * (g - float(g @ y)))

    return _node(y, (logits,), backward)


def row_softmax(logits: Tensor) -> Tensor:
    """Softmax applied independently to each row of a 2-d tensor."""
    x = logits.data
    if x.ndim != 2:
        raise ValueError("row_softmax expects a 2-d tensor")
    if x.shape[0] == 0:
        return _node(x.copy(), (logits,), lambda g: _accumulate(logits, g * 0))
    if x.shape[1] == 0:
        raise ValueError("row_softmax over zero columns")
    if not np.all(np.isfinite(x)):
        raise NumericError("row_softmax input is not finite")
    y = np.exp(x - x.max(axis=1, keepdims=True))
    y /= y.sum(axis=1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        _accumulate(logits, y * (g - dot))

    return _node(y, (logits,), backward)


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two equal-length vectors.

    A zero-norm argument yields 0 with zero gradient, so padded or empty
    inputs never divide by zero.
    """
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ValueError(f"cosine shapes differ: {a.data.shape} vs {b.data.shape}")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na == 0.0 or nb == 0.0:
        return _node(np.float64(0.0), (a, b), lambda g: None)
    c = float(a.data @ b.data) / (na * nb)

    def backward(g):
        g = float(g)
        _accumulate(a, g * (b.data / (na * nb) - c * a.data / (na * na)))
        _accumulate(b, g * (a.data / (na * nb) - c * b.data / (nb * nb)))

    return _node(np.float64(c), (a, b), backward)


def cosine_rows(m: Tensor, q: Tensor) -> Tensor:
    """Cosine similarity of each row of `m` (N,D) with `q` (D,) -> (N,)."""
    if m.data.ndim != 2 or q.data.ndim != 1 or m.data.shape[1] != q.data.shape[0]:
        raise ValueError(f"cosine_rows shapes incompatible: {m.data.shape} vs {q.data.shape}")
    norms = np.linalg.norm(m.data, axis=1)
    qn = float(np.linalg.norm(q.data))
    valid = (norms > 0.0) & (qn > 0.0)
    safe = np.where(norms > 0.0, norms, 1.0)
    c = np.where(valid, (m.data @ q.data) / (safe * (qn if qn > 0 else 1.0)), 0.0)

    def backward(g):
        gv = g * valid
        if qn > 0.0:
            gm = (np.outer(gv / (safe * qn), q.data)
                  - (gv * c / (safe * safe))[:, None] * m.data)
            _accumulate(m, gm)
            gq = (gv / (safe * qn)) @ m.data - float(gv @ c) * q.data / (qn * qn)
            _accumulate(q, gq)

    return _node(c, (m, q), backward)


def cosine_cross(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise cosine similarity: (R,D) x (K,D) -> (R,K)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ValueError(f"cosine_cross shapes incompatible: {a.data.shape} vs {b.data.shape}")
    an = np.linalg.norm(a.data, axis=1)
    bn = np.linalg.norm(b.data, axis=1)
    valid = (an[:, None] > 0.0) & (bn[None, :] > 0.0)
    sa = np.where(an > 0.0, an, 1.0)
    sb = np.where(bn > 0.0, bn, 1.0)
    c = np.where(valid, (a.data @ b.data.T) / (sa[:, None] * sb[None, :]), 0.0)

    def backward(g):
        gv = g * valid
        scaled = gv / (sa[:, None] * sb[None, :])
        ga = scaled @ b.data - ((gv * c).sum(axis=1) / (sa * sa))[:, None] * a.data
        gb = scaled.T @ a.data - ((gv * c).sum(axis=0) / (sb * sb))[:, None] * b.data
        _accumulate(a, ga)
        _accumulate(b, gb)

    return _node(c, (a, b), backward)


# -- fused LSTM cell ---------------------------------------------------------

def lstm_step(x: Tensor, h: Tensor, c: Tensor,
              w_x: Tensor, w_h: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step with input/forget/output gates and a tanh candidate.

    Gate pre-activations are laid out as [input, forget, candidate, output]
    along the 4*d axis of `w_x` (d_in, 4d), `w_h` (d, 4d) and `b` (4d,).
    Returns (h', c').
    """
    d = h.data.shape[0]
    if (x.data.ndim != 1 or w_x.data.shape != (x.data.shape[0], 4 * d)
            or w_h.data.shape != (d, 4 * d) or b.data.shape != (4 * d,)
            or c.data.shape != (d,)):
        raise ValueError("lstm_step weight/state dimensions are inconsistent")

    pre = x.data @ w_x.data + h.data @ w_h.data + b.data
    i = _sigmoid(pre[0:d])
    f = _sigmoid(pre[d:2 * d])
    cand = np.tanh(pre[2 * d:3 * d])
    o = _sigmoid(pre[3 * d:4 * d])
    c2 = f * c.data + i * cand
    tc2 = np.tanh(c2)
    h2 = o * tc2
    packed_out = np.concatenate([h2, c2])

    def backward(g):
        gh = g[:d]
        gc_direct = g[d:]
        go = gh * tc2
        gc2 = gc_direct + gh * o * (1.0 - tc2 * tc2)
        gf = gc2 * c.data
        gi = gc2 * cand
        gcand = gc2 * i
        dpre = np.concatenate([
            gi * i * (1.0 - i),
            gf * f * (1.0 - f),
            gcand * (1.0 - cand * cand),
            go * o * (1.0 - o),
        ])
        _accumulate(x, w_x.data @ dpre)
        _accumulate(h, w_h.data @ dpre)
        _accumulate(c, gc2 * f)
        _accumulate(w_x, np.outer(x.data, dpre))
        _accumulate(w_h, np.outer(h.data, dpre))
        _accumulate(b, dpre)

    packed = _node(packed_out, (x, h, c, w_x, w_h, b), backward)
    return packed[0:d], packed[d:2 * d]


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def assert_finite(t: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"{what} contains non-finite values")
    return t
