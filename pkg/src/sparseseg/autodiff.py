"""Small reverse-mode automatic differentiation engine over float64 numpy arrays.

Every trainable expression in the package (LSTM gates, point MLPs, pooling,
cross-entropy, graph loss) is built from the ops in this module. Values are
immutable once created; a graph is rebuilt for every forward pass.

Broadcasting is deliberately restricted to adding a row vector to every row of
a matrix (bias addition). Any other shape mismatch raises :class:`ShapeError`.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Node",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "scale",
    "add_const",
    "matmul",
    "transpose",
    "sigmoid",
    "tanh",
    "abs",
    "pow_const",
    "concat",
    "repeat_rows",
    "max_over_rows",
    "sum_all",
    "mean_all",
    "softmax",
    "softmax_cross_entropy",
    "backward",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


def _as_array(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


class Node:
    """A value in the computation graph together with its gradient."""

    __slots__ = ("value", "_grad", "parents", "_backward", "name")

    def __init__(self, value, parents: tuple["Node", ...] = (), backward_fn=None, name: str = ""):
        if not (isinstance(value, np.ndarray) and value.dtype == np.float64 and value.ndim == 2):
            value = _as_array(value)
        self.value: np.ndarray = value
        self.value.setflags(write=False)
        self._grad: np.ndarray | None = None
        self.parents = parents
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def assign(self, value) -> None:
        """Replace the value of a leaf node (used by optimizers between steps)."""
        value = np.array(value, dtype=np.float64, copy=True)
        if value.shape != self.value.shape:
            raise ShapeError(f"assign: shape {value.shape} does not match {self.value.shape}")
        value.setflags(write=False)
        self.value = value

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a scalar node, got shape {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Node:
    if isinstance(x, Node):
        return x
    if isinstance(x, (int, float)):
        raise ShapeError("scalar constants must go through scale() or add_const()")
    return constant(x)


def constant(value, name: str = "") -> Node:
    return Node(np.array(value, dtype=np.float64, copy=True), name=name)


def parameter(value, name: str = "") -> Node:
    """Leaf node intended to be updated by an optimizer (copies ``value``)."""
    return Node(np.array(value, dtype=np.float64, copy=True), name=name)


def _check_same(op: str, a: Node, b: Node) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Node, b: Node) -> Node:
    """Elementwise sum; ``b`` may be a 1×d row added to every row of ``a``."""
    if a.shape == b.shape:
        return Node(a.value + b.value, (a, b), lambda g: (g, g))
    if b.shape[0] == 1 and b.shape[1] == a.shape[1]:
        return Node(a.value + b.value, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")


def sub(a: Node, b: Node) -> Node:
    _check_same("sub", a, b)
    return Node(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Node, b: Node) -> Node:
    _check_same("mul", a, b)
    av, bv = a.value, b.value
    return Node(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Node, c: float) -> Node:
    return Node(a.value * c, (a,), lambda g: (g * c,))


def add_const(a: Node, c: float) -> Node:
    return Node(a.value + c, (a,), lambda g: (g,))


def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return Node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Node) -> Node:
    return Node(np.ascontiguousarray(a.value.T), (a,), lambda g: (g.T,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a: Node) -> Node:
    s = _sigmoid(a.value)
    return Node(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    return Node(t, (a,), lambda g: (g * (1.0 - t * t),))


def abs(a: Node) -> Node:  # noqa: A001 - mirrors the math name
    # sign(0) == 0 gives the subgradient 0 at the kink
    sgn = np.sign(a.value)
    return Node(np.abs(a.value), (a,), lambda g: (g * sgn,))


def pow_const(base: float, exponent: Node) -> Node:
    """``base ** exponent`` for a positive constant base."""
    if not base > 0:
        raise ValueError(f"pow_const needs a positive base, got {base}")
    out = np.power(base, exponent.value)
    log_base = np.log(base)
    return Node(out, (exponent,), lambda g: (g * out * log_base,))


def concat(nodes: Iterable[Node], axis: int = 1) -> Node:
    nodes = tuple(nodes)
    if not nodes:
        raise ShapeError("concat: no inputs")
    if axis not in (0, 1, -1, -2):
        raise ShapeError(f"concat: axis {axis} out of range for 2-d tensors")
    axis = axis % 2
    other = 1 - axis
    if len({n.shape[other] for n in nodes}) != 1:
        raise ShapeError(f"concat: shapes {[n.shape for n in nodes]} disagree off axis {axis}")
    sizes = [n.shape[axis] for n in nodes]
    cuts = np.cumsum(sizes)[:-1]
    value = np.concatenate([n.value for n in nodes], axis=axis)
    return Node(value, nodes, lambda g: tuple(np.split(g, cuts, axis=axis)))


def repeat_rows(a: Node, n: int) -> Node:
    """Tile a 1×d row into an n×d matrix."""
    if a.shape[0] != 1:
        raise ShapeError(f"repeat_rows: expected a single row, got {a.shape}")
    if n < 1:
        raise ShapeError("repeat_rows: n must be positive")
    return Node(np.repeat(a.value, n, axis=0), (a,), lambda g: (g.sum(axis=0, keepdims=True),))


def max_over_rows(a: Node) -> Node:
    """Column-wise maximum; the gradient goes to the first (lowest row) argmax."""
    if a.value.size == 0 or a.shape[0] == 0:
        raise ShapeError("max_over_rows: empty input")
    idx = np.argmax(a.value, axis=0)
    cols = np.arange(a.shape[1])
    out = a.value[idx, cols][None, :]

    def back(g):
        ga = np.zeros_like(a.value)
        ga[idx, cols] = g[0]
        return (ga,)

    return Node(out, (a,), back)


def sum_all(a: Node) -> Node:
    shape = a.shape
    return Node(np.sum(a.value), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a: Node) -> Node:
    return scale(sum_all(a), 1.0 / a.value.size)


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(a: Node) -> Node:
    """Row-wise softmax."""
    p = np.exp(_log_softmax(a.value))

    def back(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return Node(p, (a,), back)


def softmax_cross_entropy(logits: Node, targets) -> Node:
    """Mean over rows of the negative log-likelihood of ``targets`` under softmax(logits)."""
    t = np.asarray(targets, dtype=np.intp)
    n, k = logits.shape
    if t.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: {n} rows but {t.shape} targets")
    if n == 0:
        raise ShapeError("softmax_cross_entropy: empty input")
    if t.min() < 0 or t.max() >= k:
        raise ValueError(f"softmax_cross_entropy: targets outside [0, {k})")
    logp = _log_softmax(logits.value)
    rows = np.arange(n)
    loss = -logp[rows, t].sum() / n

    def back(g):
        d = np.exp(logp)
        d[rows, t] -= 1.0
        return (d * (g[0, 0] / n),)

    return Node(loss, (logits,), back)


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Populate ``.grad`` on every node reachable from the scalar ``loss``.

    Gradients are reset on the reachable subgraph first, so calling this twice
    does not accumulate.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topo_order(loss)
    for node in order:
        node._grad = None
    loss._grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is None or node._grad is None:
            continue
        grads = node._backward(node._grad)
        for parent, g in zip(node.parents, grads):
            if g is None:
                continue
            if parent._grad is None:
                parent._grad = np.array(g, dtype=np.float64, copy=True).reshape(parent.shape)
            else:
                parent._grad = parent._grad + g
