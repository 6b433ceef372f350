"""Select the compiled kernels when available, else the pure-Python ones.

Set ``SPINAL_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pycore

HAS_COMPILED = False
if os.environ.get("SPINAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core  # type: ignore[attr-defined]

        HAS_COMPILED = True
    except ImportError:  # pragma: no cover - depends on the build
        _core = None

if HAS_COMPILED:
    pop_batch = _core.pop_batch
    star_batch = _core.star_batch
    BACKEND = "compiled"
else:
    pop_batch = _pycore.pop_batch
    star_batch = _pycore.star_batch
    BACKEND = "python"


def backends():
    """Available kernel modules by name (for benchmarks and parity tests)."""
    out = {"python": _pycore}
    if HAS_COMPILED:
        out["compiled"] = _core
    return out
