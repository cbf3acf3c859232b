"""Select the compiled assignment kernels when built, else the pure-Python ones.

Set ``TOKENMIXUP_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _assign_py

BACKEND = "python"
solve_min = _assign_py.solve_min
lex_min_matching = _assign_py.lex_min_matching

if os.environ.get("TOKENMIXUP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _assign_core
    except ImportError:
        _assign_core = None
    if _assign_core is not None:
        BACKEND = "cython"
        solve_min = _assign_core.solve_min
        lex_min_matching = _assign_core.lex_min_matching

BACKENDS = {"python": _assign_py}
try:
    from . import _assign_core as _compiled

    BACKENDS["cython"] = _compiled
except ImportError:
    pass
