"""Backend selection for the per-batch kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Setting ``NDF_LAB_PURE_PYTHON=1`` forces the fallback.
Callers go through this module (``kernels.softmax_xent(...)``) so that
:func:`set_backend` takes effect everywhere.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_NAMES = (
    "softmax_rows",
    "softmax_xent",
    "state_features",
    "policy_forward",
    "policy_logprob_grad",
    "momentum_step",
    "adam_step",
    "loss_ranks",
)

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

backend = None


def set_backend(name):
    """Route every kernel to backend ``name``; returns the previous name."""
    global backend
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}")
    previous = backend
    impl = BACKENDS[name]
    for fn in _NAMES:
        globals()[fn] = getattr(impl, fn)
    backend = name
    return previous


def available_backends():
    return sorted(BACKENDS)


if os.environ.get("NDF_LAB_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    set_backend("python")
else:
    set_backend("cython")
