"""Named parameter store with Adam and Adagrad update rules.

The generator and the validator live in two separate stores; freezing a
store makes it invisible to gradients() and rejects optimizer steps, which
is how the alternating training phases keep one network fixed while the
other learns.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import precision
from .errors import FrozenParameterError, PaskitError


class ParameterStore:
    """Map of name -> tensor plus per-parameter optimizer state."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.adam_t: int = 0
        self.adagrad_accum: dict[str, np.ndarray] = {}
        self.frozen: bool = False

    def add(self, name: str, values: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise PaskitError(f"parameter {name!r} already exists")
        arr = np.asarray(values, dtype=precision.dtype())
        if arr.ndim != 2:
            raise PaskitError(f"parameters are 2-D, got shape {arr.shape} for {name!r}")
        self.params[name] = arr
        return arr

    def names(self) -> list[str]:
        return list(self.params)

    def copy(self) -> "ParameterStore":
        clone = ParameterStore()
        clone.params = {k: v.copy() for k, v in self.params.items()}
        clone.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        clone.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        clone.adam_t = self.adam_t
        clone.adagrad_accum = {k: v.copy() for k, v in self.adagrad_accum.items()}
        clone.frozen = self.frozen
        return clone

    def fingerprint(self) -> bytes:
        """Byte-exact digest of all parameter values (not optimizer state)."""
        import hashlib

        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(self.params[name].tobytes())
        return h.digest()

    # -- checkpoint support --------------------------------------------------
    def state_tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for name, arr in self.params.items():
            out[f"{prefix}{name}"] = arr
        for name, arr in self.adam_m.items():
            out[f"{prefix}adam.m/{name}"] = arr
        for name, arr in self.adam_v.items():
            out[f"{prefix}adam.v/{name}"] = arr
        for name, arr in self.adagrad_accum.items():
            out[f"{prefix}adagrad/{name}"] = arr
        return out

    @classmethod
    def from_state_tensors(cls, tensors: dict[str, np.ndarray], adam_t: int) -> "ParameterStore":
        store = cls()
        for name, arr in tensors.items():
            if name.startswith("adam.m/"):
                store.adam_m[name[len("adam.m/") :]] = arr
            elif name.startswith("adam.v/"):
                store.adam_v[name[len("adam.v/") :]] = arr
            elif name.startswith("adagrad/"):
                store.adagrad_accum[name[len("adagrad/") :]] = arr
            else:
                store.params[name] = arr
        store.adam_t = adam_t
        return store


@contextmanager
def frozen(store: ParameterStore):
    """Freeze a store for the duration of a training step on its counterpart."""
    previous = store.frozen
    store.frozen = True
    try:
        yield store
    finally:
        store.frozen = previous


def _check_step(store: ParameterStore, grads: dict[str, np.ndarray]) -> None:
    if store.frozen:
        raise FrozenParameterError(
            f"optimizer step on frozen store (got gradients for {sorted(grads)[:3]}...)"
        )
    for name in grads:
        if name not in store.params:
            raise PaskitError(f"gradient for unknown parameter {name!r}")
        if grads[name].shape != store.params[name].shape:
            raise PaskitError(
                f"gradient shape {grads[name].shape} != parameter shape "
                f"{store.params[name].shape} for {name!r}"
            )


def adam_step(
    store: ParameterStore,
    grads: dict[str, np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update with bias correction; the step count advances once per call."""
    _check_step(store, grads)
    store.adam_t += 1
    t = store.adam_t
    for name, g in grads.items():
        m = store.adam_m.get(name)
        if m is None:
            m = store.adam_m[name] = np.zeros_like(store.params[name])
        v = store.adam_v.get(name)
        if v is None:
            v = store.adam_v[name] = np.zeros_like(store.params[name])
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        store.params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def adagrad_step(
    store: ParameterStore,
    grads: dict[str, np.ndarray],
    lr: float = 1e-2,
    eps: float = 1e-8,
) -> None:
    """One Adagrad update: accumulate squared gradients, scale steps down over time."""
    _check_step(store, grads)
    for name, g in grads.items():
        accum = store.adagrad_accum.get(name)
        if accum is None:
            accum = store.adagrad_accum[name] = np.zeros_like(store.params[name])
        accum += g * g
        store.params[name] -= lr * g / (np.sqrt(accum) + eps)
