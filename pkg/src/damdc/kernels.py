"""Backend selection for the network step kernels.

The compiled ``_kernels`` extension is used when it was built; otherwise
the NumPy implementation in ``_kernels_py`` is used. ``DAMDC_BACKEND``
(``auto``, ``cython`` or ``python``) overrides the choice at import time.
Complex-valued simulations always run on the NumPy backend.
"""
import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

AVAILABLE = {"python": _kernels_py}
if _compiled is not None:
    AVAILABLE["cython"] = _compiled


def _select(name):
    if name in (None, "", "auto"):
        return _compiled or _kernels_py
    if name not in AVAILABLE:
        raise ImportError(f"kernel backend {name!r} is not available (have {sorted(AVAILABLE)})")
    return AVAILABLE[name]


backend = _select(os.environ.get("DAMDC_BACKEND"))
log.debug("using %s kernels", backend.NAME)


def get(name=None, complex_data=False):
    """Kernel module for ``name`` (default: the import-time choice)."""
    if complex_data:
        return _kernels_py
    return backend if name is None else _select(name)
