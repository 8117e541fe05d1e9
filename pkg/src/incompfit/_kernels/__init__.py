"""Numerical kernels with a compiled backend and a numpy fallback.

The compiled extension ``_core`` is used when it imports; otherwise the
pure-numpy ``_fallback`` module is used. Both expose the same functions.
Call :func:`use_backend` to switch explicitly (tests and benchmarks do).
"""
from __future__ import annotations

import numpy as np

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_NAMES = ("cell_probs", "brd_loglik_grad", "brd_em", "mvn_gls_terms", "mvn_subject_loglik")
BACKEND = None


def available_backends():
    return ["compiled", "python"] if _core is not None else ["python"]


def use_backend(name):
    """Select ``"compiled"`` or ``"python"`` kernels for the whole package."""
    global BACKEND
    if name == "compiled":
        if _core is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        mod = _core
    elif name == "python":
        mod = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    for fn in _NAMES:
        globals()[fn] = getattr(mod, fn)
    BACKEND = name


use_backend("compiled" if _core is not None else "python")


def as_kernel_args(X, obs_index, z, offset=None):
    """Coerce BRD arguments to the contiguous dtypes both backends accept."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    obs_index = np.ascontiguousarray(obs_index, dtype=np.int64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if offset is None:
        offset = np.zeros(X.shape[0])
    return X, obs_index, z, np.ascontiguousarray(offset, dtype=np.float64)
