"""Select the compiled kernels when available, else the Python fallback.

Set HEISENBERG_MF_BACKEND=python to force the fallback.
"""
import importlib
import os

_NAMES = {"compiled": "heisenberg_mf._core", "python": "heisenberg_mf._fallback"}


def load(name: str):
    return importlib.import_module(_NAMES[name])


def available() -> list:
    out = []
    for name in _NAMES:
        try:
            load(name)
            out.append(name)
        except ImportError:
            pass
    return out


def _select():
    forced = os.environ.get("HEISENBERG_MF_BACKEND", "").strip().lower()
    if forced:
        if forced not in _NAMES:
            raise ImportError(f"unknown backend {forced!r}; choose from {sorted(_NAMES)}")
        return forced, load(forced)
    try:
        return "compiled", load("compiled")
    except ImportError:
        return "python", load("python")


BACKEND, kernels = _select()
