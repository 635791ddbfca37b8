"""Numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or when
``SHERBET_PURE_PYTHON=1`` is set. Signatures mirror ``_ckernels.pyx``.
"""
import numpy as np

BACKEND = "python"


def poincare_distance_pairs(E, I, J):
    x = E[I]
    y = E[J]
    diff = np.sum((x - y) ** 2, axis=1)
    a = 1.0 - np.sum(x * x, axis=1)
    b = 1.0 - np.sum(y * y, axis=1)
    gamma = 1.0 + 2.0 * diff / (a * b)
    return np.arccosh(np.maximum(gamma, 1.0))


def poincare_distance_pairs_grad(E, I, J, gd, out):
    """Accumulate d(distance)/dE weighted by ``gd`` into ``out``."""
    x = E[I]
    y = E[J]
    delta = x - y
    diff = np.sum(delta * delta, axis=1)
    a = 1.0 - np.sum(x * x, axis=1)
    b = 1.0 - np.sum(y * y, axis=1)
    gm1 = 2.0 * diff / (a * b)
    live = (diff > 0.0) & (gd != 0.0)
    root = np.sqrt(np.where(live, gm1 * (gm1 + 2.0), 1.0))
    coef = np.where(live, gd * 4.0 / (a * b * root), 0.0)
    gx = coef[:, None] * (delta + (diff / a)[:, None] * x)
    gy = coef[:, None] * (-delta + (diff / b)[:, None] * y)
    np.add.at(out, I, gx)
    np.add.at(out, J, gy)


def segment_sum(X, seg, nseg):
    out = np.zeros((nseg, X.shape[1]))
    np.add.at(out, seg, X)
    return out


def segment_softmax(S, seg, nseg):
    mx = np.full((nseg, S.shape[1]), -np.inf)
    np.maximum.at(mx, seg, S)
    ex = np.exp(S - mx[seg])
    tot = segment_sum(ex, seg, nseg)
    return ex / tot[seg]


def segment_softmax_grad(P, G, seg, nseg):
    dot = segment_sum(P * G, seg, nseg)
    return P * (G - dot[seg])


def cooccurrence_counts(indptr, codes, n):
    B = np.zeros((n, n), dtype=np.int64)
    for k in range(len(indptr) - 1):
        adm = np.unique(codes[indptr[k]:indptr[k + 1]])
        if adm.size < 2:
            continue
        B[np.ix_(adm, adm)] += 1
        B[adm, adm] -= 1
    return B
