"""Compiled and fallback kernels agree, and the distance gradient is exact."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from sherbet import _kernels
from sherbet._kernels import _pykernels
from conftest import BACKENDS


def _ball_points(rng, n, d, radius=0.9):
    x = rng.normal(size=(n, d))
    r = radius * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / d)
    return x / np.linalg.norm(x, axis=1, keepdims=True) * r


def test_backend_flag_matches_module():
    assert _kernels.BACKEND in {m.BACKEND for m in BACKENDS}


@given(st.integers(0, 2**32 - 1))
def test_distance_pairs_backends_agree(seed):
    rng = np.random.default_rng(seed)
    E = _ball_points(rng, 8, 3)
    I, J = rng.integers(0, 8, size=12), rng.integers(0, 8, size=12)
    ref = _kernels.poincare_distance_pairs(E, I, J, impl=_pykernels)
    for m in BACKENDS:
        np.testing.assert_allclose(_kernels.poincare_distance_pairs(E, I, J, impl=m), ref, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_distance_grad_backends_agree(seed):
    rng = np.random.default_rng(seed)
    E = _ball_points(rng, 6, 3)
    I, J = rng.integers(0, 6, size=10), rng.integers(0, 6, size=10)
    gd = rng.normal(size=10)
    ref = _kernels.poincare_distance_pairs_grad(E, I, J, gd, np.zeros_like(E), impl=_pykernels)
    for m in BACKENDS:
        got = _kernels.poincare_distance_pairs_grad(E, I, J, gd, np.zeros_like(E), impl=m)
        np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-12)


def test_distance_grad_matches_finite_differences(backend):
    rng = np.random.default_rng(3)
    E = _ball_points(rng, 5, 4, radius=0.7)
    I, J = np.array([0, 1, 2, 3]), np.array([1, 2, 4, 0])
    gd = rng.normal(size=4)
    g = _kernels.poincare_distance_pairs_grad(E, I, J, gd, np.zeros_like(E), impl=backend)
    h = 1e-6
    num = np.zeros_like(E)
    for idx in np.ndindex(E.shape):
        up, dn = E.copy(), E.copy()
        up[idx] += h
        dn[idx] -= h
        num[idx] = gd @ (_kernels.poincare_distance_pairs(up, I, J) - _kernels.poincare_distance_pairs(dn, I, J)) / (2 * h)
    np.testing.assert_allclose(g, num, rtol=1e-6, atol=1e-8)


def test_distance_grad_zero_for_coincident_points(backend):
    E = np.array([[0.1, 0.2], [0.1, 0.2]])
    g = _kernels.poincare_distance_pairs_grad(E, np.array([0]), np.array([1]), np.array([1.0]),
                                              np.zeros_like(E), impl=backend)
    assert np.all(g == 0.0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_segment_ops_backends_agree(seed, nseg):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(nseg, 4 * nseg + 1))
    seg = np.sort(np.concatenate([np.arange(nseg), rng.integers(0, nseg, size=n - nseg)]))
    X = rng.normal(size=(n, 3)) * 10
    G = rng.normal(size=(n, 3))
    s_ref = _pykernels.segment_sum(X, seg, nseg)
    p_ref = _pykernels.segment_softmax(X, seg, nseg)
    g_ref = _pykernels.segment_softmax_grad(p_ref, G, seg, nseg)
    for m in BACKENDS:
        np.testing.assert_allclose(_kernels.segment_sum(X, seg, nseg, impl=m), s_ref, rtol=1e-12, atol=1e-12)
        p = _kernels.segment_softmax(X, seg, nseg, impl=m)
        np.testing.assert_allclose(p, p_ref, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(_kernels.segment_softmax_grad(p, G, seg, nseg, impl=m), g_ref,
                                   rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(_pykernels.segment_sum(p_ref, seg, nseg), 1.0, atol=1e-12)


def test_segment_softmax_unsorted_segments(backend):
    seg = np.array([1, 0, 1, 0, 2])
    S = np.array([[0.0], [1.0], [2.0], [1.0], [5.0]])
    P = _kernels.segment_softmax(S, seg, 3, impl=backend)
    np.testing.assert_allclose(P[[1, 3], 0], [0.5, 0.5])
    np.testing.assert_allclose(P[4, 0], 1.0)


@given(st.integers(0, 2**32 - 1))
def test_cooccurrence_backends_agree(seed):
    rng = np.random.default_rng(seed)
    n = 7
    sizes = rng.integers(0, 6, size=5)
    indptr = np.concatenate([[0], np.cumsum(sizes)])
    codes = rng.integers(0, n, size=int(indptr[-1]))
    ref = _pykernels.cooccurrence_counts(indptr, codes, n)
    for m in BACKENDS:
        np.testing.assert_array_equal(_kernels.cooccurrence_counts(indptr, codes, n, impl=m), ref)
    assert np.array_equal(ref, ref.T) and np.all(np.diag(ref) == 0)


def test_pure_python_switch(monkeypatch):
    import importlib
    import sherbet._kernels as k
    monkeypatch.setenv("SHERBET_PURE_PYTHON", "1")
    reloaded = importlib.reload(k)
    try:
        assert reloaded.BACKEND == "python"
    finally:
        monkeypatch.delenv("SHERBET_PURE_PYTHON")
        importlib.reload(k)
