"""Backend selection for the simulation loop.

The compiled ``_kernel`` extension is used when it was built; otherwise the
pure-Python loop.  Set ``PRICELAB_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernel_py

try:
    if os.environ.get("PRICELAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _kernel as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernel_py.simulate}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.simulate

BACKEND = "cython" if _compiled is not None else "python"
simulate = BACKENDS[BACKEND]


def get(name: str | None = None):
    if name is None:
        return simulate
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available (have {sorted(BACKENDS)})") from None
