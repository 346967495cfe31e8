"""Hot-loop kernels with backend selection at import.

The compiled extension (``_simscan``, Cython) is used when present; otherwise
the numpy fallback takes over. Set ``PHRASEQA_PURE_PYTHON=1`` to force the
fallback. Both backends expose the same three functions with identical
semantics; ``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

from . import numpy_backend

_impl = None
if not os.environ.get("PHRASEQA_PURE_PYTHON"):
    try:
        from . import _simscan as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = None
if _impl is None:
    _impl = numpy_backend

BACKEND: str = "numpy" if _impl is numpy_backend else "cython"

dot_scores = _impl.dot_scores
gather_dot_scores = _impl.gather_dot_scores
sparse_dot = _impl.sparse_dot

__all__ = ["BACKEND", "dot_scores", "gather_dot_scores", "sparse_dot", "numpy_backend"]
