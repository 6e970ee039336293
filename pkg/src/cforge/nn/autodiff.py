"""Reverse-mode automatic differentiation on dense float64 arrays.

Operations performed while a :class:`Tape` is active are appended to it as
nodes with strictly increasing ids. Every vector-Jacobian product is itself
written in terms of :class:`Tensor` operations, so running
``tape.gradient(..., create_graph=True)`` records the backward pass onto the
same tape and a second call differentiates through it. That is the only
higher-order use the training loop needs (the gradient penalty).

Example::

    w = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = (w * w).sum()
    (gw,) = tape.gradient(y, [w])
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, NumericError, ShapeError

_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def _active_tape():
    stack = _tape_stack()
    if not stack:
        return None
    tape = stack[-1]
    return tape if tape.recording else None


def current_tape() -> "Tape":
    """The innermost active tape; raises if none is active."""
    stack = _tape_stack()
    if not stack:
        raise ContractError("no active tape")
    return stack[-1]


@contextmanager
def no_record():
    """Suspend recording on the active tape (parameters still flow through)."""
    stack = _tape_stack()
    if not stack:
        yield
        return
    tape = stack[-1]
    old = tape.recording
    tape.recording = False
    try:
        yield
    finally:
        tape.recording = old


class Node:
    __slots__ = ("id", "inputs", "vjp")

    def __init__(self, id_: int, inputs: tuple, vjp: Callable):
        self.id = id_
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Append-only operation record. One training step owns one tape."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.recording = True

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        assert stack and stack[-1] is self
        stack.pop()
        return False

    def _record(self, inputs: tuple, vjp: Callable) -> Node:
        node = Node(len(self.nodes), inputs, vjp)
        self.nodes.append(node)
        return node

    def gradient(
        self,
        target: "Tensor",
        sources: Sequence["Tensor"],
        create_graph: bool = False,
        seed: "Tensor | None" = None,
    ) -> list["Tensor"]:
        """d target / d source for each source.

        ``target`` must be a scalar unless an explicit ``seed`` cotangent of
        the same shape is supplied. With ``create_graph`` the backward
        operations are recorded so the returned gradients are differentiable.
        """
        if seed is None:
            if target.data.size != 1:
                raise ContractError(
                    f"backward needs a scalar output, got shape {target.shape}"
                )
            seed = Tensor(np.ones_like(target.data))
        elif seed.shape != target.shape:
            raise ShapeError(f"seed shape {seed.shape} != target shape {target.shape}")

        if target.node is None:
            return [
                seed if s is target else Tensor(np.zeros_like(s.data)) for s in sources
            ]

        reachable: dict[int, Node] = {}
        frontier = [target.node]
        while frontier:
            node = frontier.pop()
            if node.id in reachable:
                continue
            reachable[node.id] = node
            for inp in node.inputs:
                if inp.node is not None and inp.node.id not in reachable:
                    frontier.append(inp.node)

        node_grads: dict[int, Tensor] = {target.node.id: seed}
        leaf_grads: dict[int, Tensor] = {}
        wanted_nodes = {s.node.id for s in sources if s.node is not None}
        captured: dict[int, Tensor] = {}

        stack = _tape_stack()
        stack.append(self)
        old = self.recording
        self.recording = create_graph
        try:
            for nid in sorted(reachable, reverse=True):
                g = node_grads.pop(nid, None)
                if g is None:
                    continue
                if nid in wanted_nodes:
                    captured[nid] = g
                node = reachable[nid]
                in_grads = node.vjp(g)
                for inp, ig in zip(node.inputs, in_grads):
                    if ig is None or not inp.requires_grad:
                        continue
                    if inp.node is not None:
                        key = inp.node.id
                        prev = node_grads.get(key)
                        node_grads[key] = ig if prev is None else prev + ig
                    else:
                        key = id(inp)
                        prev = leaf_grads.get(key)
                        leaf_grads[key] = ig if prev is None else prev + ig
        finally:
            self.recording = old
            stack.pop()

        out = []
        for s in sources:
            if s.node is not None:
                g = captured.get(s.node.id)
            else:
                g = leaf_grads.get(id(s))
            out.append(g if g is not None else Tensor(np.zeros_like(s.data)))
        return out


def backward(target: "Tensor", params: Sequence["Tensor"]) -> dict[int, np.ndarray]:
    """Gradient map keyed by ``id(param)`` using the tape ``target`` lives on."""
    stack = _tape_stack()
    if not stack:
        raise ContractError("backward called with no active tape")
    grads = stack[-1].gradient(target, params)
    return {id(p): g.data for p, g in zip(params, grads)}


def _as_tensor(x) -> "Tensor":
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, inputs: tuple, vjp: Callable) -> "Tensor":
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out = Tensor(data, requires_grad=True)
        out.node = tape._record(inputs, vjp)
        return out
    return Tensor(data)


class Tensor:
    """Dense float64 array with an optional link to the tape node producing it."""

    __slots__ = ("data", "requires_grad", "node", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node: Node | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def tape_id(self) -> int | None:
        return None if self.node is None else self.node.id

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    @property
    def T(self):
        return transpose(self)


# ---------------------------------------------------------------- primitives


def sum_to(x: Tensor, shape: tuple) -> Tensor:
    """Sum ``x`` down to ``shape`` (inverse of broadcasting)."""
    if x.shape == tuple(shape):
        return x
    data = x.data
    lead = data.ndim - len(shape)
    if lead:
        data = data.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and data.shape[i] != 1)
    if axes:
        data = data.sum(axis=axes, keepdims=True)
    in_shape = x.shape
    return _make(data.reshape(shape), (x,), lambda g: (broadcast_to(g, in_shape),))


def broadcast_to(x: Tensor, shape: tuple) -> Tensor:
    if x.shape == tuple(shape):
        return x
    in_shape = x.shape
    data = np.broadcast_to(x.data, shape).copy()
    return _make(data, (x,), lambda g: (sum_to(g, in_shape),))


def add(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (sum_to(g, sa), sum_to(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape
    return _make(
        a.data - b.data, (a, b), lambda g: (sum_to(g, sa), sum_to(neg(g), sb))
    )


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (neg(g),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape

    def vjp(g):
        ga = sum_to(mul(g, b), sa) if a.requires_grad else None
        gb = sum_to(mul(g, a), sb) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape

    def vjp(g):
        ga = sum_to(div(g, b), sa) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = sum_to(neg(div(mul(g, a), mul(b, b))), sb)
        return ga, gb

    return _make(a.data / b.data, (a, b), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def vjp(g):
        ga = matmul(g, transpose(b)) if a.requires_grad else None
        gb = matmul(transpose(a), g) if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T.copy(), (a,), lambda g: (transpose(g),))


def reshape(a: Tensor, shape: tuple) -> Tensor:
    in_shape = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (reshape(g, in_shape),))


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    in_shape = a.shape
    data = a.data.sum(axis=axis, keepdims=keepdims)
    if axis is None:
        kept = (1,) * len(in_shape)
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(in_shape) for ax in axes)
        kept = tuple(1 if i in axes else n for i, n in enumerate(in_shape))

    def vjp(g):
        return (broadcast_to(reshape(g, kept), in_shape),)

    return _make(np.asarray(data), (a,), vjp)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(reduce_sum(a, axis, keepdims), Tensor(1.0 / count))


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (mul(g, mul(a, Tensor(2.0))),))


def sqrt(a: Tensor) -> Tensor:
    """Square root; the derivative at exactly zero is taken as zero."""
    out_data = np.sqrt(a.data)
    positive = out_data > 0
    mask = Tensor(positive.astype(np.float64))
    guard = Tensor(np.where(positive, 0.0, 1.0))

    def vjp(g):
        # out is referenced as a tensor so the vjp stays differentiable
        return (mul(div(mul(g, Tensor(0.5)), add(out, guard)), mask),)

    out = _make(out_data, (a,), vjp)
    return out


def mask_mul(a: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant array (activation slopes, dropout masks)."""
    m = Tensor(mask)
    return _make(a.data * mask, (a,), lambda g: (mul(g, m),))


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    width = a.shape[1]
    return _make(
        a.data[:, start:stop].copy(), (a,), lambda g: (pad_cols(g, start, width),)
    )


def pad_cols(a: Tensor, start: int, width: int) -> Tensor:
    stop = start + a.shape[1]
    data = np.zeros((a.shape[0], width))
    data[:, start:stop] = a.data
    return _make(data, (a,), lambda g: (slice_cols(g, start, stop),))


# ------------------------------------------------------------ composite ops


def concat(x: Tensor, y: Tensor) -> Tensor:
    """Column-wise concatenation of two row-aligned matrices."""
    x, y = _as_tensor(x), _as_tensor(y)
    if x.data.ndim != 2 or y.data.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"concat shape mismatch: {x.shape} and {y.shape}")
    wx = x.shape[1]
    width = wx + y.shape[1]

    def vjp(g):
        return slice_cols(g, 0, wx), slice_cols(g, wx, width)

    return _make(np.concatenate([x.data, y.data], axis=1), (x, y), vjp)


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    if x.data.ndim != 2 or x.shape[1] != W.shape[0] or b.shape[-1] != W.shape[1]:
        raise ShapeError(f"affine shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    return add(matmul(x, W), b)


def relu(x: Tensor) -> Tensor:
    return mask_mul(x, (x.data > 0).astype(np.float64))


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    return mask_mul(x, np.where(x.data > 0, 1.0, alpha))


def dropout(x: Tensor, p: float, train: bool, rng=None, mask=None) -> Tensor:
    """Inverted dropout. Pass ``mask`` to reuse a previously drawn keep-mask."""
    if not train or p == 0.0:
        return x
    if mask is None:
        mask = dropout_mask(x.shape, p, rng)
    return mask_mul(x, mask)


def dropout_mask(shape: tuple, p: float, rng: np.random.Generator) -> np.ndarray:
    keep = rng.random(shape) >= p
    return keep.astype(np.float64) / (1.0 - p)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    train: bool,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    momentum: float = 0.9,
    eps: float = 1e-6,
    update_running: bool = True,
) -> Tensor:
    """Batch normalisation over rows (population variance).

    In train mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    if train:
        mu = reduce_mean(x, axis=0, keepdims=True)
        centred = sub(x, mu)
        var = reduce_mean(square(centred), axis=0, keepdims=True)
        xhat = div(centred, sqrt(add(var, Tensor(eps))))
        if update_running:
            running_mean *= momentum
            running_mean += (1 - momentum) * mu.data.ravel()
            running_var *= momentum
            running_var += (1 - momentum) * var.data.ravel()
    else:
        scale = 1.0 / np.sqrt(running_var + eps)
        xhat = mask_mul(sub(x, Tensor(running_mean)), scale)
    return add(mul(xhat, gamma), beta)


def norm2_rows(x: Tensor) -> Tensor:
    """Euclidean norm of each row, shape (n,)."""
    return sqrt(reduce_sum(square(x), axis=1))


def check_finite(t: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite values in {what}")
    return t
