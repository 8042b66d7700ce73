"""Numerical kernel backends.

The compiled extension (``_core``) is preferred when importable; the
pure-Python reference (``_reference``) is the fallback. Both implement
identical arithmetic and return bit-identical results, so backend choice
never affects outputs, only speed. ``use_backend`` switches explicitly
(parity tests, benchmarks).
"""

from __future__ import annotations

import numpy as np

from . import _reference

try:
    from . import _core
except ImportError:
    _core = None

_BACKENDS = {"python": _reference}
if _core is not None:
    _BACKENDS["cython"] = _core

_active = _BACKENDS.get("cython", _reference)


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _active.NAME


def get_backend(name: str | None = None):
    """Return a backend module; the active one when name is None."""
    if name is None:
        return _active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(sorted(_BACKENDS))}"
        ) from None


def use_backend(name: str) -> None:
    global _active
    _active = get_backend(name)


def as_logits(z) -> np.ndarray:
    """Coerce to the 1-D contiguous float64 array the kernels expect."""
    arr = np.ascontiguousarray(z, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"logits must be 1-D, got shape {arr.shape}")
    return arr


def softmax(z):
    return _active.softmax(as_logits(z))


def ce_loss(z, target):
    return _active.ce_loss(as_logits(z), target)


def ce_grad(z, target):
    return _active.ce_grad(as_logits(z), target)


def ce_loss_grad(z, target):
    return _active.ce_loss_grad(as_logits(z), target)


def ul_loss(z, target, eps):
    return _active.ul_loss(as_logits(z), target, eps)


def ul_grad(z, target, eps):
    return _active.ul_grad(as_logits(z), target, eps)


def ul_loss_grad(z, target, eps):
    return _active.ul_loss_grad(as_logits(z), target, eps)
