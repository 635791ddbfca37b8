"""Directed, weighted code co-occurrence graph."""
import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import UnknownCode

DEFAULT_PHI = 0.9


@dataclass(frozen=True)
class CooccurrenceGraph:
    counts: np.ndarray      # B, symmetric, zero diagonal
    adjacency: np.ndarray   # A, row-stochastic
    self_loop: np.ndarray   # (1 - phi) A + phi I
    normalized: np.ndarray  # row-normalized self_loop
    phi: float

    @property
    def row_sums(self):
        return self.counts.sum(axis=1)


def count_cooccurrence(admissions, code_index=None, n_codes=None):
    """Pair counts within admissions.

    ``admissions`` is an iterable of code collections. Items are code
    strings resolved through ``code_index`` or, when it is ``None``, integer
    column ids. Repeated codes inside one admission count once.
    """
    indptr = [0]
    flat = []
    for adm in admissions:
        for c in adm:
            if code_index is not None:
                if c not in code_index:
                    raise UnknownCode(f"code {c!r} is not a leaf of the ontology")
                c = code_index[c]
            flat.append(int(c))
        indptr.append(len(flat))
    if n_codes is None:
        n_codes = (max(code_index.values()) + 1) if code_index else (max(flat) + 1 if flat else 0)
    return _kernels.cooccurrence_counts(np.array(indptr), np.array(flat, dtype=np.int64), n_codes)


def build_adjacency(B, phi=DEFAULT_PHI):
    """Return ``(A, A_hat)`` for counts ``B`` and self-loop weight ``phi``."""
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0, 1), got {phi}")
    B = np.asarray(B, dtype=np.float64)
    q = B.sum(axis=1)
    A = np.zeros_like(B)
    nz = q != 0
    A[nz] = B[nz] / q[nz, None]
    np.fill_diagonal(A, np.where(nz, 0.0, 1.0))
    return A, normalize_adjacency(A, phi)


def normalize_adjacency(A, phi=DEFAULT_PHI):
    """Row-normalized ``(1 - phi) A + phi I``."""
    A_tilde = (1.0 - phi) * np.asarray(A, dtype=np.float64) + phi * np.eye(len(A))
    return A_tilde / A_tilde.sum(axis=1, keepdims=True)


def build_graph(B, phi=DEFAULT_PHI):
    A, A_hat = build_adjacency(B, phi)
    A_tilde = (1.0 - phi) * A + phi * np.eye(len(A))
    return CooccurrenceGraph(np.asarray(B), A, A_tilde, A_hat, phi)


def write_adjacency_csv(path, A):
    """Dump nonzero entries of ``A`` as ``i,j,weight`` rows."""
    rows, cols = np.nonzero(A)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "weight"])
        for i, j in zip(rows, cols):
            w.writerow([int(i), int(j), repr(float(A[i, j]))])


def read_adjacency_csv(path, n):
    A = np.zeros((n, n))
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            A[int(row["i"]), int(row["j"])] = float(row["weight"])
    return A
