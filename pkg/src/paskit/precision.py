"""Global floating-point mode.

Training runs in 32-bit for speed; gradient verification runs in 64-bit
because central finite differences are unreliable in 32-bit. The mode is a
process-wide setting, not a per-tensor attribute.
"""

from contextlib import contextmanager

import numpy as np

from .errors import ConfigError

_MODES = {"f32": np.float32, "f64": np.float64}
_mode = "f32"


def set_precision(mode: str) -> None:
    global _mode
    if mode not in _MODES:
        raise ConfigError(f"unknown precision {mode!r}; expected one of {sorted(_MODES)}")
    _mode = mode


def get_precision() -> str:
    return _mode


def dtype() -> type:
    """numpy dtype for the current mode."""
    return _MODES[_mode]


def asarray(values) -> np.ndarray:
    return np.asarray(values, dtype=dtype())


@contextmanager
def precision(mode: str):
    """Temporarily switch the floating-point mode (used by tests and gradient checks)."""
    previous = _mode
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(previous)
