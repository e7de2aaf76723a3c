"""Reverse-mode automatic differentiation over dense 2-D tensors.

A Graph records operations in the order they are built, which is already a
topological order, so the forward pass is a single sweep over the node list
and the backward pass is the reverse sweep. Values are numpy arrays; every
tensor in a graph is 2-D (scalars are 1x1, vectors are 1xN rows), which
keeps shape handling uniform.

The op set is deliberately closed: matmul, add, mul, concat, slice, reshape,
tanh, sigmoid, softmax (last axis), log, gather, dropout, sum, scale. It is
exactly what the networks and losses here need, nothing more.

Parameters are read from a ParameterStore at evaluation time, so re-running
a graph after an optimizer step sees the updated values. Dropout masks come
from the graph's RngStream; pinning that stream's state makes two forward
passes bit-identical, which is how the finite-difference checker holds masks
constant.
"""

from __future__ import annotations

import numpy as np

from . import precision
from .errors import NonFiniteError, PaskitError, ShapeError
from .rng import RngStream

LOG_FLOOR = 1e-12  # log() clamps its argument here; keeps losses finite


class Node:
    __slots__ = ("index", "kind", "inputs", "meta", "name")

    def __init__(self, index, kind, inputs, meta, name=None):
        self.index = index
        self.kind = kind
        self.inputs = inputs  # tuple of Node
        self.meta = meta
        self.name = name

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<node {self.index} {self.kind}{label}>"


class Graph:
    """A recorded computation over parameters, constants and free inputs."""

    def __init__(self, rng: RngStream | None = None):
        self.nodes: list[Node] = []
        self.rng = rng  # consumed by dropout nodes, in node order
        self._values: list = []
        self._named: dict[str, Node] = {}
        self._param_nodes: dict[tuple[int, str], Node] = {}
        self._aux: dict[int, np.ndarray] = {}  # dropout masks, kept for backward
        self._bindings: dict[str, np.ndarray] = {}
        self._evaluated_upto = 0

    # -- construction -------------------------------------------------------
    def _add(self, kind, inputs, meta=None, name=None) -> Node:
        node = Node(len(self.nodes), kind, inputs, meta, name)
        self.nodes.append(node)
        if name is not None:
            if name in self._named:
                raise PaskitError(f"duplicate node name {name!r}")
            self._named[name] = node
        return node

    def input(self, name: str) -> Node:
        return self._add("input", (), meta=name, name=name)

    def param(self, store, name: str) -> Node:
        """Reference a parameter; one node per (store, name) so grads accumulate."""
        key = (id(store), name)
        node = self._param_nodes.get(key)
        if node is None:
            if name not in store.params:
                raise PaskitError(f"unknown parameter {name!r}")
            node = self._add("param", (), meta=(store, name))
            self._param_nodes[key] = node
        return node

    def const(self, values) -> Node:
        arr = np.asarray(values, dtype=precision.dtype())
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        return self._add("const", (), meta=arr)

    def matmul(self, a: Node, b: Node) -> Node:
        return self._add("matmul", (a, b))

    def add(self, a: Node, b: Node) -> Node:
        return self._add("add", (a, b))

    def mul(self, a: Node, b: Node) -> Node:
        return self._add("mul", (a, b))

    def concat(self, parts: list[Node], axis: int) -> Node:
        if not parts:
            raise ShapeError("concat of zero tensors")
        return self._add("concat", tuple(parts), meta=axis)

    def slice(self, a: Node, rows: slice, cols: slice) -> Node:
        return self._add("slice", (a,), meta=(rows, cols))

    def reshape(self, a: Node, shape: tuple[int, int]) -> Node:
        return self._add("reshape", (a,), meta=tuple(shape))

    def tanh(self, a: Node) -> Node:
        return self._add("tanh", (a,))

    def sigmoid(self, a: Node) -> Node:
        return self._add("sigmoid", (a,))

    def softmax(self, a: Node) -> Node:
        """Row-wise softmax over the last axis."""
        return self._add("softmax", (a,))

    def log(self, a: Node) -> Node:
        """Natural log, input clamped at LOG_FLOOR."""
        return self._add("log", (a,))

    def gather(self, table: Node, indices) -> Node:
        idx = np.asarray(indices, dtype=np.int64)
        return self._add("gather", (table,), meta=idx)

    def dropout(self, a: Node, keep_prob: float, active: bool) -> Node:
        """Inverted dropout: mask/keep_prob at train time, identity otherwise."""
        if not 0.0 < keep_prob <= 1.0:
            raise PaskitError(f"keep_prob must be in (0, 1], got {keep_prob}")
        if active and self.rng is None:
            raise PaskitError("dropout requires the graph to own an RngStream")
        return self._add("dropout", (a,), meta=(float(keep_prob), bool(active)))

    def sum(self, a: Node) -> Node:
        """Sum of all entries, as a 1x1 tensor."""
        return self._add("sum", (a,))

    def scale(self, a: Node, factor: float) -> Node:
        return self._add("scale", (a,), meta=float(factor))

    def name_node(self, node: Node, name: str) -> Node:
        if name in self._named:
            raise PaskitError(f"duplicate node name {name!r}")
        node.name = name
        self._named[name] = node
        return node

    # -- evaluation ----------------------------------------------------------
    def evaluate(self, bindings: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
        """Forward pass. Computes any nodes not yet evaluated; returns named outputs.

        Calling evaluate again after appending nodes only runs the new ones,
        so cached values (and dropout masks) of the earlier prefix are kept.
        """
        if bindings:
            for key, value in bindings.items():
                self._bindings[key] = np.asarray(value, dtype=precision.dtype())
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for node in self.nodes[self._evaluated_upto:]:
                value = _FORWARD[node.kind](self, node)
                if not np.isfinite(value.sum()) and not np.all(np.isfinite(value)):
                    raise NonFiniteError(f"non-finite output at {node!r}")
                self._values.append(value)
        self._evaluated_upto = len(self.nodes)
        return {name: self._values[node.index] for name, node in self._named.items()}

    def invalidate(self) -> None:
        """Drop cached values so the next evaluate() recomputes everything."""
        self._values = []
        self._aux = {}
        self._evaluated_upto = 0

    def value(self, node: Node) -> np.ndarray:
        return self._values[node.index]

    def output(self, name: str) -> np.ndarray:
        return self._values[self._named[name].index]

    # -- gradients -------------------------------------------------------------
    def gradients(self, output: str | Node) -> dict[str, np.ndarray]:
        """d(output)/d(parameter) for every unfrozen parameter in the graph.

        The named output must be scalar (1x1) and the forward pass must have
        run. Parameters that the output does not depend on get zero tensors.
        """
        node = self._named[output] if isinstance(output, str) else output
        if self._evaluated_upto != len(self.nodes):
            raise PaskitError("gradients() requires a completed forward pass")
        out_val = self._values[node.index]
        if out_val.shape != (1, 1):
            raise ShapeError(f"gradient source must be scalar, got shape {out_val.shape} at {node!r}")

        grads = _GradBuffer(len(self.nodes))
        grads.seed(node.index, np.ones((1, 1), dtype=precision.dtype()))
        for n in reversed(self.nodes[: node.index + 1]):
            gy = grads.values[n.index]
            if gy is None or not n.inputs:
                continue
            _BACKWARD[n.kind](self, n, gy, grads)
            grads.values[n.index] = None  # free as we go

        result: dict[str, np.ndarray] = {}
        for (_, pname), pnode in self._param_nodes.items():
            store, name = pnode.meta
            if store.frozen:
                continue
            g = grads.values[pnode.index]
            if g is None:
                g = np.zeros_like(store.params[name])
            result[name] = np.ascontiguousarray(g)
        return result


# -- forward rules ---------------------------------------------------------


def _fwd_input(g: Graph, n: Node):
    try:
        return g._bindings[n.meta]
    except KeyError:
        raise PaskitError(f"unbound input {n.meta!r}") from None


def _fwd_param(g: Graph, n: Node):
    store, name = n.meta
    return store.params[name]


def _fwd_const(g: Graph, n: Node):
    return n.meta


def _fwd_matmul(g: Graph, n: Node):
    a, b = (g._values[i.index] for i in n.inputs)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul mismatch {a.shape} x {b.shape} between {n.inputs[0]!r} and {n.inputs[1]!r}"
        )
    return a @ b


def _check_broadcast(n: Node, a, b):
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(
                f"cannot broadcast {a.shape} with {b.shape} between "
                f"{n.inputs[0]!r} and {n.inputs[1]!r}"
            )


def _fwd_add(g: Graph, n: Node):
    a, b = (g._values[i.index] for i in n.inputs)
    _check_broadcast(n, a, b)
    return a + b


def _fwd_mul(g: Graph, n: Node):
    a, b = (g._values[i.index] for i in n.inputs)
    _check_broadcast(n, a, b)
    return a * b


def _fwd_concat(g: Graph, n: Node):
    parts = [g._values[i.index] for i in n.inputs]
    return np.concatenate(parts, axis=n.meta)


def _fwd_slice(g: Graph, n: Node):
    rows, cols = n.meta
    return g._values[n.inputs[0].index][rows, cols]


def _fwd_reshape(g: Graph, n: Node):
    return g._values[n.inputs[0].index].reshape(n.meta)


def _fwd_tanh(g: Graph, n: Node):
    return np.tanh(g._values[n.inputs[0].index])


def _fwd_sigmoid(g: Graph, n: Node):
    x = g._values[n.inputs[0].index]
    e = np.exp(-np.abs(x))  # stable in both tails
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _fwd_softmax(g: Graph, n: Node):
    x = g._values[n.inputs[0].index]
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _fwd_log(g: Graph, n: Node):
    x = g._values[n.inputs[0].index]
    return np.log(np.maximum(x, LOG_FLOOR))


def _fwd_gather(g: Graph, n: Node):
    table = g._values[n.inputs[0].index]
    idx = n.meta
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"gather index out of range for table {table.shape} at {n!r}")
    return table[idx]


def _fwd_dropout(g: Graph, n: Node):
    x = g._values[n.inputs[0].index]
    keep_prob, active = n.meta
    if not active or keep_prob >= 1.0:
        return x
    mask = (g.rng.random(x.shape) < keep_prob).astype(x.dtype) / keep_prob
    g._aux[n.index] = mask
    return x * mask


def _fwd_sum(g: Graph, n: Node):
    return g._values[n.inputs[0].index].sum().reshape(1, 1)


def _fwd_scale(g: Graph, n: Node):
    return g._values[n.inputs[0].index] * n.meta


_FORWARD = {
    "input": _fwd_input,
    "param": _fwd_param,
    "const": _fwd_const,
    "matmul": _fwd_matmul,
    "add": _fwd_add,
    "mul": _fwd_mul,
    "concat": _fwd_concat,
    "slice": _fwd_slice,
    "reshape": _fwd_reshape,
    "tanh": _fwd_tanh,
    "sigmoid": _fwd_sigmoid,
    "softmax": _fwd_softmax,
    "log": _fwd_log,
    "gather": _fwd_gather,
    "dropout": _fwd_dropout,
    "sum": _fwd_sum,
    "scale": _fwd_scale,
}


# -- backward rules ----------------------------------------------------------


class _GradBuffer:
    """Per-node gradient accumulator.

    The first contribution is stored by reference (it may alias another
    node's gradient or a view); only once a second contribution arrives is a
    fresh owned array allocated, after which accumulation is in-place.
    """

    __slots__ = ("values", "owned")

    def __init__(self, n: int):
        self.values: list = [None] * n
        self.owned = bytearray(n)

    def seed(self, index: int, g):
        self.values[index] = g
        self.owned[index] = 1

    def accumulate(self, node: Node, g):
        i = node.index
        current = self.values[i]
        if current is None:
            self.values[i] = g
        elif self.owned[i]:
            current += g
        else:
            self.values[i] = current + g
            self.owned[i] = 1


def _accum(grads: _GradBuffer, node: Node, g):
    grads.accumulate(node, g)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    for axis in (0, 1):
        if shape[axis] == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _bwd_matmul(g: Graph, n: Node, gy, grads):
    a, b = n.inputs
    va, vb = g._values[a.index], g._values[b.index]
    _accum(grads, a, gy @ vb.T)
    _accum(grads, b, va.T @ gy)


def _bwd_add(g: Graph, n: Node, gy, grads):
    a, b = n.inputs
    _accum(grads, a, _unbroadcast(gy, g._values[a.index].shape))
    _accum(grads, b, _unbroadcast(gy, g._values[b.index].shape))


def _bwd_mul(g: Graph, n: Node, gy, grads):
    a, b = n.inputs
    va, vb = g._values[a.index], g._values[b.index]
    _accum(grads, a, _unbroadcast(gy * vb, va.shape))
    _accum(grads, b, _unbroadcast(gy * va, vb.shape))


def _bwd_concat(g: Graph, n: Node, gy, grads):
    axis = n.meta
    offset = 0
    for inp in n.inputs:
        width = g._values[inp.index].shape[axis]
        piece = gy[offset : offset + width] if axis == 0 else gy[:, offset : offset + width]
        _accum(grads, inp, piece)
        offset += width


def _bwd_slice(g: Graph, n: Node, gy, grads):
    src = n.inputs[0]
    full = np.zeros_like(g._values[src.index])
    rows, cols = n.meta
    full[rows, cols] = gy
    _accum(grads, src, full)


def _bwd_reshape(g: Graph, n: Node, gy, grads):
    src = n.inputs[0]
    _accum(grads, src, gy.reshape(g._values[src.index].shape))


def _bwd_tanh(g: Graph, n: Node, gy, grads):
    y = g._values[n.index]
    _accum(grads, n.inputs[0], gy * (1.0 - y * y))


def _bwd_sigmoid(g: Graph, n: Node, gy, grads):
    y = g._values[n.index]
    _accum(grads, n.inputs[0], gy * y * (1.0 - y))


def _bwd_softmax(g: Graph, n: Node, gy, grads):
    y = g._values[n.index]
    dot = (gy * y).sum(axis=-1, keepdims=True)
    _accum(grads, n.inputs[0], y * (gy - dot))


def _bwd_log(g: Graph, n: Node, gy, grads):
    x = g._values[n.inputs[0].index]
    inside = x >= LOG_FLOOR  # clamped region is flat
    _accum(grads, n.inputs[0], gy * inside / np.maximum(x, LOG_FLOOR))


def _bwd_gather(g: Graph, n: Node, gy, grads):
    table = n.inputs[0]
    full = np.zeros_like(g._values[table.index])
    np.add.at(full, n.meta, gy)
    _accum(grads, table, full)


def _bwd_dropout(g: Graph, n: Node, gy, grads):
    mask = g._aux.get(n.index)
    _accum(grads, n.inputs[0], gy if mask is None else gy * mask)


def _bwd_sum(g: Graph, n: Node, gy, grads):
    src = n.inputs[0]
    _accum(grads, src, np.broadcast_to(gy, g._values[src.index].shape))


def _bwd_scale(g: Graph, n: Node, gy, grads):
    _accum(grads, n.inputs[0], gy * n.meta)


_BACKWARD = {
    "matmul": _bwd_matmul,
    "add": _bwd_add,
    "mul": _bwd_mul,
    "concat": _bwd_concat,
    "slice": _bwd_slice,
    "reshape": _bwd_reshape,
    "tanh": _bwd_tanh,
    "sigmoid": _bwd_sigmoid,
    "softmax": _bwd_softmax,
    "log": _bwd_log,
    "gather": _bwd_gather,
    "dropout": _bwd_dropout,
    "sum": _bwd_sum,
    "scale": _bwd_scale,
}
