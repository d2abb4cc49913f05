"""Backend selection for the path-simulation kernel.

The compiled extension is used when it was built and the model carries
affine-tanh tables; otherwise the numpy fallback runs.  Set the environment
variable ``REGIME_MDP_KERNEL`` to ``python`` to force the fallback or to
``compiled`` to fail loudly when the extension is missing.
"""
from __future__ import annotations

import os

from . import _fallback

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

fallback = _fallback

_CHOICE = os.environ.get("REGIME_MDP_KERNEL", "auto").lower()
if _CHOICE not in ("auto", "python", "compiled"):
    raise ImportError(f"REGIME_MDP_KERNEL must be auto, python or compiled, not {_CHOICE!r}")
if _CHOICE == "compiled" and compiled is None:
    raise ImportError("REGIME_MDP_KERNEL=compiled but regime_mdp._kernels is not built")


def default_backend_name() -> str:
    if _CHOICE == "python" or compiled is None:
        return "python"
    return "compiled"


def select(model, backend: str | None = None):
    """Return the kernel module to use for ``model``."""
    name = backend or default_backend_name()
    if name == "python":
        return fallback
    if name != "compiled":
        raise ValueError(f"unknown backend {name!r}")
    if compiled is None:
        raise RuntimeError("compiled kernel is not available")
    if model.tables is None:
        return fallback
    return compiled
