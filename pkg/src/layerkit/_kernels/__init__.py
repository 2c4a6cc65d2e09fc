"""kNN kernel backend selection.

The compiled Cython kernel is used when its extension imported successfully;
otherwise the numpy fallback. Environment overrides:

- LAYERKIT_BACKEND=compiled|numpy forces the backend (raising at import if
  the compiled kernel was requested but is not built).
- LAYERKIT_THREADS=<int> caps OpenMP threads in the compiled kernel; unset
  or <= 0 means the library default. The kernel result is identical for any
  thread count.

Both backends implement knn_label_batch(points, labels, queries, k,
num_threads) with identical neighbor and vote tie rules; the compiled kernel
is limited to k <= 64, so larger k routes to numpy regardless of backend.
"""

import os

import numpy as np

from . import knn_numpy

try:
    from . import _knn_cy
except ImportError:
    _knn_cy = None

MAX_COMPILED_K = 64

_forced = os.environ.get("LAYERKIT_BACKEND", "").strip().lower()
if _forced == "numpy":
    _impl = knn_numpy
    BACKEND = "numpy"
elif _forced == "compiled":
    if _knn_cy is None:
        raise ImportError(
            "LAYERKIT_BACKEND=compiled but the compiled kernel is not built; "
            "reinstall with a C compiler or unset LAYERKIT_BACKEND"
        )
    _impl = _knn_cy
    BACKEND = "compiled"
elif _forced:
    raise ValueError(f"LAYERKIT_BACKEND must be 'compiled' or 'numpy', got {_forced!r}")
elif _knn_cy is not None:
    _impl = _knn_cy
    BACKEND = "compiled"
else:
    _impl = knn_numpy
    BACKEND = "numpy"


def available_backends() -> list[str]:
    out = ["numpy"]
    if _knn_cy is not None:
        out.insert(0, "compiled")
    return out


def get_num_threads() -> int:
    """Thread cap from LAYERKIT_THREADS; 0 means library default."""
    raw = os.environ.get("LAYERKIT_THREADS", "").strip()
    if not raw:
        return 0
    try:
        return max(0, int(raw))
    except ValueError:
        return 0


def knn_label_batch(points, labels, queries, k, num_threads=None, backend=None):
    """Route a batch prediction to the selected backend.

    Arrays are coerced to the dtypes/contiguity the kernels require. k above
    the compiled kernel's limit always runs on the numpy implementation.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    if num_threads is None:
        num_threads = get_num_threads()
    impl = _impl
    if backend is not None:
        if backend == "numpy":
            impl = knn_numpy
        elif backend == "compiled":
            if _knn_cy is None:
                raise ValueError("compiled backend is not built")
            impl = _knn_cy
        else:
            raise ValueError(f"unknown backend {backend!r}")
    if impl is _knn_cy and k > MAX_COMPILED_K:
        impl = knn_numpy
    return impl.knn_label_batch(points, labels, queries, int(k), int(num_threads))
