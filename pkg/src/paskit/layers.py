"""Parameter initialization and graph builders for LSTM / feed-forward layers.

Weight matrices use Glorot uniform bounds, biases start at zero except the
LSTM forget gate (initialized to 1), and embedding tables that are not
loaded from pre-trained vectors start at normal(0, 0.01).
"""

from __future__ import annotations

import math

import numpy as np

from . import precision
from .autodiff import Graph, Node
from .optim import ParameterStore
from .rng import RngStream


def glorot_uniform(rng: RngStream, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape).astype(precision.dtype())


def zeros(shape) -> np.ndarray:
    return np.zeros(shape, dtype=precision.dtype())


def embedding_init(rng: RngStream, rows: int, dim: int, scale: float = 0.01) -> np.ndarray:
    return rng.normal(0.0, scale, (rows, dim)).astype(precision.dtype())


# -- LSTM ---------------------------------------------------------------------
# Gate layout along the 4h axis: [input, forget, output | candidate].


def lstm_init(store: ParameterStore, prefix: str, input_dim: int, hidden: int, rng: RngStream) -> None:
    w = glorot_uniform(rng, input_dim + hidden, 4 * hidden, (input_dim + hidden, 4 * hidden))
    b = zeros((1, 4 * hidden))
    b[0, hidden : 2 * hidden] = 1.0  # forget gate bias
    store.add(f"{prefix}.W", w)
    store.add(f"{prefix}.b", b)


def lstm_sequence(
    g: Graph,
    xs: list[Node],
    store: ParameterStore,
    prefix: str,
    hidden: int,
    reverse: bool = False,
) -> list[Node]:
    """Run an LSTM over xs; returns hidden states aligned to input order."""
    w = g.param(store, f"{prefix}.W")
    b = g.param(store, f"{prefix}.b")
    h = g.const(zeros((1, hidden)))
    c = g.const(zeros((1, hidden)))
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    states: list[Node | None] = [None] * len(xs)
    for t in order:
        z = g.add(g.matmul(g.concat([xs[t], h], axis=1), w), b)
        gates = g.sigmoid(g.slice(z, slice(None), slice(0, 3 * hidden)))
        cand = g.tanh(g.slice(z, slice(None), slice(3 * hidden, 4 * hidden)))
        i_gate = g.slice(gates, slice(None), slice(0, hidden))
        f_gate = g.slice(gates, slice(None), slice(hidden, 2 * hidden))
        o_gate = g.slice(gates, slice(None), slice(2 * hidden, 3 * hidden))
        c = g.add(g.mul(f_gate, c), g.mul(i_gate, cand))
        h = g.mul(o_gate, g.tanh(c))
        states[t] = h
    return states  # type: ignore[return-value]


def bilstm_init(store: ParameterStore, prefix: str, input_dim: int, hidden: int, rng: RngStream) -> None:
    lstm_init(store, f"{prefix}.fwd", input_dim, hidden, rng)
    lstm_init(store, f"{prefix}.bwd", input_dim, hidden, rng)


def bilstm_tokens(
    g: Graph, xs: list[Node], store: ParameterStore, prefix: str, hidden: int
) -> list[Node]:
    """Per-token concatenation of forward and backward states (each 1 x 2*hidden)."""
    fwd = lstm_sequence(g, xs, store, f"{prefix}.fwd", hidden)
    bwd = lstm_sequence(g, xs, store, f"{prefix}.bwd", hidden, reverse=True)
    return [g.concat([fwd[t], bwd[t]], axis=1) for t in range(len(xs))]


def bilstm_final(
    g: Graph, xs: list[Node], store: ParameterStore, prefix: str, hidden: int
) -> Node:
    """Concatenation of the two directions' final states (1 x 2*hidden)."""
    fwd = lstm_sequence(g, xs, store, f"{prefix}.fwd", hidden)
    bwd = lstm_sequence(g, xs, store, f"{prefix}.bwd", hidden, reverse=True)
    return g.concat([fwd[-1], bwd[0]], axis=1)


# -- feed-forward -------------------------------------------------------------


def fnn_init(
    store: ParameterStore, prefix: str, input_dim: int, hidden: int, output_dim: int, rng: RngStream
) -> None:
    store.add(f"{prefix}.W1", glorot_uniform(rng, input_dim, hidden, (input_dim, hidden)))
    store.add(f"{prefix}.b1", zeros((1, hidden)))
    store.add(f"{prefix}.W2", glorot_uniform(rng, hidden, output_dim, (hidden, output_dim)))
    store.add(f"{prefix}.b2", zeros((1, output_dim)))


def fnn_apply(
    g: Graph,
    x: Node,
    store: ParameterStore,
    prefix: str,
    dropout: float = 0.0,
    train: bool = False,
) -> Node:
    """Two-layer tanh network; dropout (if any) is applied at input and hidden."""
    active = train and dropout > 0.0
    if active:
        x = g.dropout(x, 1.0 - dropout, True)
    h = g.tanh(g.add(g.matmul(x, g.param(store, f"{prefix}.W1")), g.param(store, f"{prefix}.b1")))
    if active:
        h = g.dropout(h, 1.0 - dropout, True)
    return g.add(g.matmul(h, g.param(store, f"{prefix}.W2")), g.param(store, f"{prefix}.b2"))
