"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy/LAPACK
fallback is used. ``PILOTBOX_BACKEND=python`` forces the fallback.
"""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError as exc:  # extension not built
        log.debug("compiled kernels unavailable: %s", exc)
        return None
    return _ckernels


_compiled = None if os.environ.get("PILOTBOX_BACKEND", "").lower() == "python" else _load_compiled()

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"


def get_backend(name=None):
    """Kernel module by name, defaulting to the one selected at import."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def thread_count():
    """Thread cap from ``PILOTBOX_THREADS`` (default 1)."""
    raw = os.environ.get("PILOTBOX_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PILOTBOX_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"PILOTBOX_THREADS must be a positive integer, got {raw!r}")
    return n
