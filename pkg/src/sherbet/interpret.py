"""Per-patient attribution from the attention weights and the task head."""
import json
from dataclasses import dataclass, field

import numpy as np

from .encoder import encode_patients
from .errors import HeadMissing
from .hyperbolic import write_embedding_csv

TRACE_SCHEMA = 1


def compute_delta(beta, theta, W):
    """Admission-to-output coefficients.

    Parameters
    ----------
    beta : ndarray, shape (T,)
        Admission attention of one patient.
    theta : ndarray, shape (T, p)
        Per-dimension admission attention.
    W : ndarray, shape (o, p)
        Task head weights. ``None`` raises ``HeadMissing``.

    Returns
    -------
    ndarray, shape (T, o)
        ``beta[t] * softmax over t of (W theta[t])``, column by column.
    """
    if W is None:
        raise HeadMissing("no fine-tune head; run finetune first")
    beta = np.asarray(beta, dtype=np.float64).ravel()
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    z = theta @ np.asarray(W, dtype=np.float64).T          # (T, o)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return beta[:, None] * (e / e.sum(axis=0, keepdims=True))


@dataclass
class AttentionTrace:
    patient_id: str
    admissions: list          # [{"t", "codes", "alpha"}]
    beta: np.ndarray          # (T,)
    theta: np.ndarray         # (T, p)
    delta: np.ndarray         # (T, o)
    top_outputs: list = field(default_factory=list)  # [{"output", "label", "score", "admission", "delta"}]

    def to_obj(self):
        return {
            "schema_version": TRACE_SCHEMA,
            "patient_id": self.patient_id,
            "admissions": self.admissions,
            "beta": self.beta.tolist(),
            "theta": self.theta.tolist(),
            "delta": self.delta.tolist(),
            "top_outputs": self.top_outputs,
        }

    def dumps(self):
        return json.dumps(self.to_obj(), sort_keys=True, indent=1) + "\n"

    def check(self, tol=1e-9):
        """Assert the normalization invariants; returns ``self``."""
        for adm in self.admissions:
            assert abs(sum(adm["alpha"]) - 1.0) < tol
        assert abs(self.beta.sum() - 1.0) < tol
        assert np.allclose(self.theta.sum(axis=0), 1.0, atol=tol)
        s = self.delta.sum(axis=0)
        assert np.all(self.delta >= 0) and np.all(s > 0) and np.all(s <= 1.0 + tol)
        return self


def export_trace(patient, model, k=5, labels=None, admissions=None):
    """Forward one patient through a frozen model and collect its attributions.

    Parameters
    ----------
    patient : PatientRecord or list of list of int
        Either a record with ``admissions`` already mapped to columns via
        ``admissions`` or a plain list of code-column admissions.
    model : SherbetModel
        Must carry a task head.
    k : int
        How many top-scored outputs to link back to an admission.
    labels : sequence of str, optional
        Display names of the code columns.
    admissions : list of list of int, optional
        Code columns per admission when ``patient`` is a record.
    """
    if not model.has_head:
        raise HeadMissing("no fine-tune head; run finetune first")
    pid = getattr(patient, "id", "")
    adms = admissions if admissions is not None else patient
    times = [a.t for a in patient.admissions] if hasattr(patient, "admissions") else list(range(len(adms)))
    times = times[:len(adms)]
    X = model.hidden_embeddings()
    enc = encode_patients([adms], X, model.params)
    W = model.params["head"]
    scores = model.predict([adms])[0]
    delta = compute_delta(enc.beta, enc.theta, W)
    name = (lambda c: labels[c]) if labels is not None else str
    rows = []
    for r, t in enumerate(times):
        codes = enc.codes_of(r)
        rows.append({"t": int(t), "codes": [name(int(c)) for c in codes],
                     "alpha": enc.alpha_of(r).tolist()})
    top = []
    order = np.argsort(-scores, kind="stable")[:k]
    for j in order:
        best = int(np.argmax(delta[:, j]))
        top.append({"output": int(j), "label": name(int(j)) if W.shape[0] > 1 else "positive",
                    "score": float(scores[j]), "admission": best, "delta": float(delta[best, j])})
    return AttentionTrace(str(pid), rows, enc.beta.copy(), enc.theta.copy(), delta, top)


def write_hidden_csv(path, labels, X):
    """Graph-layer code embeddings, one row per code, ``hidden_`` columns."""
    write_embedding_csv(path, labels, X, prefix="hidden_")
