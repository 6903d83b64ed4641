"""Select the kernel backend at import time.

The compiled core is used when it imports; set ``NEUROLOOM_PURE_PYTHON=1``
to force the numpy fallback.
"""
import importlib
import logging
import os

log = logging.getLogger(__name__)


def _load(name=None):
    if name is None:
        name = "python" if os.environ.get("NEUROLOOM_PURE_PYTHON") else "cython"
    if name == "python":
        return importlib.import_module("neuroloom._pycore")
    try:
        return importlib.import_module("neuroloom._core")
    except ImportError as exc:
        log.info("compiled core unavailable (%s); using numpy kernels", exc)
        return importlib.import_module("neuroloom._pycore")


kernels = _load()


def get(name):
    """Return the backend module ``"cython"`` or ``"python"`` explicitly."""
    mod = _load(name)
    if mod.NAME != name:
        raise ImportError(f"backend {name!r} is not available")
    return mod


def available():
    names = ["python"]
    try:
        importlib.import_module("neuroloom._core")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names
