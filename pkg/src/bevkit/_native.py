"""Kernel backend selection.

The compiled extension (``bevkit._kernels``) is preferred when importable;
otherwise the pure NumPy/Python fallback is used. Both implement the same
functions and must return bit-identical results. Set ``BEVKIT_BACKEND`` to
``python`` or ``compiled`` to force one (``compiled`` raises if the
extension is not built).
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels  # compiled extension, optional
except ImportError:  # pragma: no cover - depends on build environment
    _kernels = None

_BACKENDS = {"python": _kernels_py}
if _kernels is not None:
    _BACKENDS["compiled"] = _kernels

_ENV_VAR = "BEVKIT_BACKEND"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (or the configured default)."""
    if name is None:
        name = os.environ.get(_ENV_VAR, "auto")
    if name in ("", "auto"):
        return _BACKENDS.get("compiled", _kernels_py)
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None


def active_backend_name() -> str:
    backend = get_backend()
    return "compiled" if backend is _BACKENDS.get("compiled") else "python"
