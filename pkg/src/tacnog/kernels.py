"""Kernel backend chosen at import: the compiled extension when it is built,
the numpy twin otherwise. ``TACNOG_PURE_PYTHON=1`` forces the fallback."""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("TACNOG_PURE_PYTHON"):
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = _kernels_py
    BACKEND = "python"

propagate = _impl.propagate
disconjugacy_violation = _impl.disconjugacy_violation
colinear_pair = _impl.colinear_pair
plant_hold = _impl.plant_hold


def available_backends():
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
