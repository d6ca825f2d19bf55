"""Backend selection for the hot loops.

The compiled ``_core`` extension is used when importable; otherwise, or when
the environment variable ``LRPERC_PURE`` is set to a non-empty value other
than ``0``, the pure-Python ``_pycore`` module is used.
"""

import os

from . import _pycore

BACKENDS = {"python": _pycore}

try:
    from . import _core
except ImportError:  # extension not built
    _core = None
else:
    BACKENDS["compiled"] = _core

if os.environ.get("LRPERC_PURE", "") not in ("", "0") or _core is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"

_impl = BACKENDS[BACKEND]


def get_backend(name=None):
    return BACKENDS[name or BACKEND]


def label_components(n, bonds, backend=None):
    return get_backend(backend).label_components(int(n), bonds)


def walk_path(indptr, indices, cumw, start, uniforms, backend=None):
    return get_backend(backend).walk_path(indptr, indices, cumw, int(start), uniforms)


def walk_until(indptr, indices, cumw, pos, start, stop_mask, uniforms, backend=None):
    return get_backend(backend).walk_until(indptr, indices, cumw, int(pos), int(start),
                                           stop_mask, uniforms)
