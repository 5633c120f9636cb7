"""Small reverse-mode automatic differentiation engine.

Every operation records its parents and a closure that pushes the output
gradient back into them.  ``backward`` replays those closures in reverse
topological order.  Shapes are never broadcast: an op either gets exactly the
shapes it expects or raises ``ShapeError``.

Batched inputs carry the batch as the leading axis, so a minibatch of
embeddings is a ``(B, Q)`` array and the interaction tensor of a batch is
``(B, Q1, Q2, Q3, Q4)``.
"""

from __future__ import annotations

import string
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when an op receives operands of incompatible shapes."""


class Node:
    """A value in the computation graph together with its gradient."""

    __slots__ = ("value", "grad", "parents", "_backward", "op", "requires_grad")

    def __init__(self, value, parents: Sequence["Node"] = (), op: str = "leaf",
                 requires_grad: bool = True):
        if not (isinstance(value, np.ndarray) and value.dtype == np.float64):
            value = np.asarray(value, dtype=np.float64)
        self.value = value
        self.parents = tuple(parents)
        # interior nodes get their gradient buffer from backward()
        self.grad = None if self.parents else np.zeros_like(self.value)
        self._backward: Callable[[], None] | None = None
        self.op = op
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.shape})"

    def __add__(self, other: "Node") -> "Node":
        return add(self, other)

    def __mul__(self, other: "Node") -> "Node":
        return multiply(self, other)


def constant(value) -> Node:
    """A node that takes no gradient (targets, fixed inputs)."""
    return Node(value, requires_grad=False)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _check_same(op: str, a: Node, b: Node) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _accumulate(node: Node, g: np.ndarray) -> None:
    if node.requires_grad:
        node.grad += g


def add(a: Node, b: Node) -> Node:
    a, b = _as_node(a), _as_node(b)
    _check_same("add", a, b)
    out = Node(a.value + b.value, (a, b), "add")

    def _backward():
        _accumulate(a, out.grad)
        _accumulate(b, out.grad)

    out._backward = _backward
    return out


def multiply(a: Node, b: Node) -> Node:
    """Elementwise product."""
    a, b = _as_node(a), _as_node(b)
    _check_same("multiply", a, b)
    out = Node(a.value * b.value, (a, b), "multiply")

    def _backward():
        _accumulate(a, out.grad * b.value)
        _accumulate(b, out.grad * a.value)

    out._backward = _backward
    return out


def scale(a: Node, c: float) -> Node:
    """Multiply by a Python scalar constant."""
    out = Node(a.value * c, (a,), "scale")

    def _backward():
        _accumulate(a, out.grad * c)

    out._backward = _backward
    return out


def add_row(x: Node, b: Node) -> Node:
    """Add vector ``b`` of shape (H,) to every row of ``x`` of shape (B, H).

    This is the only place a vector meets a matrix row-wise; it is a named op
    rather than implicit broadcasting.
    """
    if x.value.ndim != 2 or b.value.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_row: shape mismatch {x.shape} vs {b.shape}")
    out = Node(x.value + b.value[None, :], (x, b), "add_row")

    def _backward():
        _accumulate(x, out.grad)
        _accumulate(b, out.grad.sum(axis=0))

    out._backward = _backward
    return out


def add_scalar(x: Node, b: Node) -> Node:
    """Add a scalar node (shape ()) to every element of ``x``."""
    if b.shape != ():
        raise ShapeError(f"add_scalar: expected scalar, got {b.shape}")
    out = Node(x.value + b.value, (x, b), "add_scalar")

    def _backward():
        _accumulate(x, out.grad)
        _accumulate(b, np.asarray(out.grad.sum()))

    out._backward = _backward
    return out


def matvec(m: Node, v: Node) -> Node:
    """``m @ v`` for m of shape (B, N) and v of shape (N,)."""
    if m.value.ndim != 2 or v.value.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: shape mismatch {m.shape} vs {v.shape}")
    out = Node(m.value @ v.value, (m, v), "matvec")

    def _backward():
        _accumulate(m, np.outer(out.grad, v.value))
        _accumulate(v, m.value.T @ out.grad)

    out._backward = _backward
    return out


def matmul(x: Node, w: Node) -> Node:
    """``x @ w`` for x of shape (B, D) and w of shape (D, H)."""
    if x.value.ndim != 2 or w.value.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {x.shape} vs {w.shape}")
    out = Node(x.value @ w.value, (x, w), "matmul")

    def _backward():
        _accumulate(x, out.grad @ w.value.T)
        _accumulate(w, x.value.T @ out.grad)

    out._backward = _backward
    return out


def dot(a: Node, b: Node) -> Node:
    """Inner product of two 1-D nodes of equal length; returns a scalar."""
    a, b = _as_node(a), _as_node(b)
    if a.value.ndim != 1:
        raise ShapeError(f"dot: expected vectors, got {a.shape} vs {b.shape}")
    _check_same("dot", a, b)
    out = Node(np.dot(a.value, b.value), (a, b), "dot")

    def _backward():
        _accumulate(a, out.grad * b.value)
        _accumulate(b, out.grad * a.value)

    out._backward = _backward
    return out


def outer_product(*vectors: Node) -> Node:
    """N-ary outer product.

    With 1-D inputs of lengths (Q1, ..., Qn) the result has shape
    (Q1, ..., Qn).  With 2-D inputs sharing a leading batch size B the
    product is taken per row, giving (B, Q1, ..., Qn).
    """
    if len(vectors) < 2:
        raise ShapeError("outer_product: needs at least two operands")
    if len(vectors) > 20:
        raise ShapeError("outer_product: too many operands")
    shapes = [v.shape for v in vectors]
    ndims = {len(s) for s in shapes}
    if ndims == {1}:
        batch = ""
    elif ndims == {2} and len({s[0] for s in shapes}) == 1:
        batch = "z"
    else:
        raise ShapeError(f"outer_product: incompatible shapes {shapes}")

    letters = string.ascii_lowercase[: len(vectors)]
    in_specs = [batch + c for c in letters]
    out_spec = batch + letters
    lead = 1 if batch else 0
    value = vectors[0].value
    for v in vectors[1:]:
        # (.., prod so far, 1) * (.., 1, next) then merge the trailing axes
        value = (value.reshape(value.shape[:lead] + (-1, 1))
                 * v.value.reshape(v.value.shape[:lead] + (1, -1)))
    value = value.reshape(shapes[0][:lead] + tuple(s[-1] for s in shapes))
    out = Node(value, vectors, "outer_product")

    def _backward():
        for m, v in enumerate(vectors):
            if not v.requires_grad:
                continue
            others = [vectors[j].value for j in range(len(vectors)) if j != m]
            other_specs = [in_specs[j] for j in range(len(vectors)) if j != m]
            expr = ",".join([out_spec] + other_specs) + "->" + in_specs[m]
            v.grad += np.einsum(expr, out.grad, *others)

    out._backward = _backward
    return out


def flatten(x: Node, batched: bool = False) -> Node:
    """Flatten to 1-D, or to (B, -1) when ``batched``."""
    shape = x.shape
    new_shape = (shape[0], -1) if batched else (-1,)
    out = Node(x.value.reshape(new_shape), (x,), "flatten")

    def _backward():
        _accumulate(x, out.grad.reshape(shape))

    out._backward = _backward
    return out


def concat(nodes: Sequence[Node], axis: int = -1) -> Node:
    """Concatenate along ``axis``; all other dimensions must agree."""
    nodes = list(nodes)
    values = [n.value for n in nodes]
    ndim = values[0].ndim
    ax = axis % ndim
    ref = values[0].shape[:ax] + values[0].shape[ax + 1:]
    for v in values[1:]:
        if v.ndim != ndim or v.shape[:ax] + v.shape[ax + 1:] != ref:
            raise ShapeError(f"concat: shape mismatch {values[0].shape} vs {v.shape}")
    out = Node(np.concatenate(values, axis=ax), nodes, "concat")
    splits = np.cumsum([v.shape[ax] for v in values])[:-1]

    def _backward():
        for n, g in zip(nodes, np.split(out.grad, splits, axis=ax)):
            _accumulate(n, g)

    out._backward = _backward
    return out


def gather(table: Node, idx: np.ndarray) -> Node:
    """Row lookup: ``table[idx]`` for a (rows, dim) table and integer index array."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise IndexError(f"gather: index out of range for table with {rows} rows")
    out = Node(table.value[idx], (table,), "gather")

    def _backward():
        if table.requires_grad:
            np.add.at(table.grad, idx, out.grad)

    out._backward = _backward
    return out


def sigmoid(x: Node) -> Node:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    out = Node(s, (x,), "sigmoid")

    def _backward():
        _accumulate(x, out.grad * s * (1.0 - s))

    out._backward = _backward
    return out


def relu(x: Node) -> Node:
    mask = x.value > 0
    out = Node(np.where(mask, x.value, 0.0), (x,), "relu")

    def _backward():
        _accumulate(x, out.grad * mask)

    out._backward = _backward
    return out


def sum_all(x: Node) -> Node:
    out = Node(np.sum(x.value), (x,), "sum")

    def _backward():
        _accumulate(x, np.full(x.shape, out.grad))

    out._backward = _backward
    return out


def mse_loss(pred: Node, target) -> Node:
    """Mean squared error between ``pred`` and a same-shape target."""
    target = _as_node(target)
    _check_same("mse_loss", pred, target)
    diff = pred.value - target.value
    n = diff.size
    out = Node(np.mean(diff * diff), (pred, target), "mse_loss")

    def _backward():
        g = out.grad * 2.0 * diff / n
        _accumulate(pred, g)
        _accumulate(target, -g)

    out._backward = _backward
    return out


def _topological_order(root: Node) -> list[Node]:
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
    """Accumulate d(loss)/d(node) into ``.grad`` of every node reachable from ``loss``.

    Leaf gradients accumulate across calls; zero them between steps.
    """
    if loss.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topological_order(loss)
    for node in order:
        if node.parents:
            node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()


def grad_check(f: Callable[[], Node], leaves: Iterable[Node], step: float = 1e-5,
               floor: float = 1e-6) -> float:
    """Compare analytic gradients with central differences.

    ``f`` rebuilds the graph from the current leaf values and returns a
    scalar node.  Returns the largest relative error over all coordinates,
    where the error of one coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    leaves = list(leaves)
    for leaf in leaves:
        leaf.zero_grad()
    backward(f())
    analytic = [leaf.grad.copy() for leaf in leaves]

    worst = 0.0
    for leaf, ga in zip(leaves, analytic):
        flat = leaf.value.reshape(-1)
        ga = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(f().value)
            flat[i] = orig - step
            fm = float(f().value)
            flat[i] = orig
            num = (fp - fm) / (2.0 * step)
            denom = max(abs(ga[i]), abs(num), floor)
            worst = max(worst, abs(ga[i] - num) / denom)
    return worst
