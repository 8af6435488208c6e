"""Select the RK4 kernel at import time.

The compiled extension is preferred. Set ``HBVCAPSID_PURE_PYTHON=1`` to
force the pure-Python loop.
"""

import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py.integrate}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled.integrate

if os.environ.get("HBVCAPSID_PURE_PYTHON", "").strip() not in ("", "0") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"


def get_kernel(name=None):
    """The integrate function of backend ``name`` (default: the selected one)."""
    name = BACKEND if name is None else name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {sorted(BACKENDS)}") from None
