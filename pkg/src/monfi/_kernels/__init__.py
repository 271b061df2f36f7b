"""Trajectory-stepping backends.

The compiled Cython kernel is preferred; a pure-numpy fallback with identical
semantics is selected when the extension is missing or when the environment
variable ``MONFI_PURE_PYTHON`` is set.  Both expose the same four runner
functions.
"""

import os

from . import _pyfallback

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("MONFI_PURE_PYTHON"):
    _active = _compiled
    BACKEND = "cython"
else:
    _active = _pyfallback
    BACKEND = "python"

run_homodyne_mixed = _active.run_homodyne_mixed
run_pd_mixed = _active.run_pd_mixed
run_homodyne_pure = _active.run_homodyne_pure
run_pd_pure = _active.run_pd_pure

compiled_backend = _compiled
python_backend = _pyfallback


def backend_name() -> str:
    return BACKEND
