"""Segment kernels, compiled when the extension is built, numpy otherwise.

Set ``SYNERGRAPH_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SYNERGRAPH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def _prep(src, index):
    return (np.ascontiguousarray(src, dtype=np.float64),
            np.ascontiguousarray(index, dtype=np.int64))


def scatter_add_rows(src, index, n, backend=None):
    """Sum rows of ``src`` (E x d) into ``n`` output rows selected by ``index``."""
    impl = _select(backend)
    src, index = _prep(src, index)
    if src.ndim != 2:
        raise ValueError("scatter_add_rows expects a 2-D source")
    return impl.scatter_add_rows(src, index, int(n))


def segment_max(src, index, n, backend=None):
    impl = _select(backend)
    src, index = _prep(src, index)
    return impl.segment_max(src, index, int(n))


def segment_softmax(scores, index, n, backend=None):
    """Softmax of 1-D ``scores`` within each segment given by ``index``."""
    impl = _select(backend)
    scores, index = _prep(scores, index)
    return impl.segment_softmax(scores, index, int(n))


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if BACKEND != "cython":
            raise RuntimeError("compiled kernels are not available")
        return _impl
    raise ValueError(f"unknown kernel backend {backend!r}")
