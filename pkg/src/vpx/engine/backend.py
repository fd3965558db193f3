"""Kernel backend selection.

The compiled module ``vpx._kernels`` is used when importable; otherwise the
numpy kernels in ``vpx._kernels_py`` are used. ``VPX_BACKEND=python`` forces
the fallback. Both produce bit-identical outputs.
"""
from __future__ import annotations

import importlib
import os
from contextlib import contextmanager
from types import ModuleType

_python = importlib.import_module("vpx._kernels_py")


def _load_compiled() -> ModuleType | None:
    try:
        return importlib.import_module("vpx._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()
kernels: ModuleType = _python if (_compiled is None or os.environ.get("VPX_BACKEND") == "python") else _compiled


def name() -> str:
    return "compiled" if kernels is _compiled and _compiled is not None else "python"


def compiled_available() -> bool:
    return _compiled is not None


def select(which: str) -> None:
    """Switch backend globally: ``"compiled"`` or ``"python"``."""
    global kernels
    if which == "python":
        kernels = _python
    elif which == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        kernels = _compiled
    else:
        raise ValueError(f"unknown backend {which!r}")


@contextmanager
def using(which: str):
    previous = kernels
    select(which)
    try:
        yield
    finally:
        _restore(previous)


def _restore(module: ModuleType) -> None:
    global kernels
    kernels = module
