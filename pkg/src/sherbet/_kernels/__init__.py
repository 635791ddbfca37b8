"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled module is picked when it imports cleanly; set
``SHERBET_PURE_PYTHON=1`` to force the fallback. Both backends share one
calling convention: float64 C-contiguous matrices and int64 index vectors.
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("SHERBET_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def poincare_distance_pairs(E, I, J, impl=None):
    impl = impl or _impl
    return impl.poincare_distance_pairs(_f(E), _i(I), _i(J))


def poincare_distance_pairs_grad(E, I, J, gd, out, impl=None):
    impl = impl or _impl
    impl.poincare_distance_pairs_grad(_f(E), _i(I), _i(J), _f(gd), out)
    return out


def segment_sum(X, seg, nseg, impl=None):
    impl = impl or _impl
    return impl.segment_sum(_f(X), _i(seg), int(nseg))


def segment_softmax(S, seg, nseg, impl=None):
    impl = impl or _impl
    return impl.segment_softmax(_f(S), _i(seg), int(nseg))


def segment_softmax_grad(P, G, seg, nseg, impl=None):
    impl = impl or _impl
    return impl.segment_softmax_grad(_f(P), _f(G), _i(seg), int(nseg))


def cooccurrence_counts(indptr, codes, n, impl=None):
    impl = impl or _impl
    return impl.cooccurrence_counts(_i(indptr), _i(codes), int(n))


def available_backends():
    """Return every importable kernel module, fallback first."""
    out = [_pykernels]
    try:
        from . import _ckernels
        out.append(_ckernels)
    except ImportError:
        pass
    return out
