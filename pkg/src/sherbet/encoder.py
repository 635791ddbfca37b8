"""Graph layer over the co-occurrence adjacency and multi-level attention pooling.

Patients are batched raggedly: every code occurrence carries the index of
its admission and every admission the index of its patient, so the
softmaxes run within segments and no padding or masking is needed.
"""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import EmptyAdmission


@dataclass
class PatientBatch:
    occ_code: np.ndarray     # code column of each occurrence
    occ_adm: np.ndarray      # admission row of each occurrence
    adm_patient: np.ndarray  # patient row of each admission
    n_adm: int
    n_patients: int

    @classmethod
    def build(cls, patients):
        """``patients`` is a list of admission lists; each admission is an iterable of code ids.

        Codes are deduplicated and sorted inside every admission.
        """
        occ_code, occ_adm, adm_patient = [], [], []
        r = 0
        for k, adms in enumerate(patients):
            if len(adms) == 0:
                raise EmptyAdmission(f"patient row {k} has no admissions")
            for adm in adms:
                codes = sorted({int(c) for c in adm})
                if not codes:
                    raise EmptyAdmission(f"patient row {k} has an empty admission")
                occ_code.extend(codes)
                occ_adm.extend([r] * len(codes))
                adm_patient.append(k)
                r += 1
        return cls(np.array(occ_code, dtype=np.int64), np.array(occ_adm, dtype=np.int64),
                   np.array(adm_patient, dtype=np.int64), r, len(patients))


@dataclass
class PatientEncoding:
    admissions: np.ndarray   # v, one row per admission
    projected: np.ndarray    # v tilde
    patient: np.ndarray      # p, one row per patient
    alpha: np.ndarray        # per occurrence
    beta: np.ndarray         # per admission
    theta: np.ndarray        # per admission x patient dim
    batch: PatientBatch

    def alpha_of(self, adm):
        return self.alpha[self.batch.occ_adm == adm, 0]

    def codes_of(self, adm):
        return self.batch.occ_code[self.batch.occ_adm == adm]


def gnn_forward(A_hat, E, weights, dropout=0.0, rng=None, training=False):
    """Stack of ``ReLU(A_hat H W)`` layers starting from ``H = E``."""
    A = A_hat if isinstance(A_hat, ad.Tensor) else ad.Tensor(A_hat)
    h = E
    for W in weights:
        h = ad.relu(ad.matmul(ad.matmul(A, h), W))
    return ad.dropout(h, dropout, rng, training)


def code_attention_batch(X, batch, W_c, w_alpha):
    xo = ad.gather_rows(X, batch.occ_code)
    z = ad.tanh(ad.matmul(xo, ad.transpose(W_c)))
    alpha = ad.segment_softmax(ad.matmul(z, w_alpha), batch.occ_adm, batch.n_adm)
    v = ad.segment_sum(ad.scale_rows(alpha, xo), batch.occ_adm, batch.n_adm)
    return v, alpha


def admission_attention_batch(v, batch, W_u, W_v, w_beta, W_theta):
    vt = ad.leaky_relu(ad.matmul(v, ad.transpose(W_u)))
    r = ad.tanh(ad.matmul(vt, ad.transpose(W_v)))
    beta = ad.segment_softmax(ad.matmul(r, w_beta), batch.adm_patient, batch.n_patients)
    theta = ad.segment_softmax(ad.matmul(r, W_theta), batch.adm_patient, batch.n_patients)
    p = ad.segment_sum(ad.scale_rows(beta, ad.hadamard(theta, vt)), batch.adm_patient, batch.n_patients)
    return p, beta, theta, vt


def encode_batch(X, batch, params):
    """Tape-level encoder; ``params`` maps names to tensors. Returns ``(p, parts)``."""
    v, alpha = code_attention_batch(X, batch, params["W_c"], params["w_alpha"])
    p, beta, theta, vt = admission_attention_batch(v, batch, params["W_u"], params["W_v"],
                                                   params["w_beta"], params["W_theta"])
    return p, {"v": v, "alpha": alpha, "beta": beta, "theta": theta, "vt": vt}


def _consts(params):
    return {k: v if isinstance(v, ad.Tensor) else ad.Tensor(v) for k, v in params.items()}


def code_attention(admission, X, params):
    """Admission vector and code weights for one admission; numpy in, numpy out."""
    batch = PatientBatch.build([[admission]])
    v, alpha = code_attention_batch(ad.Tensor(X), batch, *(_consts(params)[k] for k in ("W_c", "w_alpha")))
    return v.value[0], alpha.value[:, 0]


def admission_attention(vs, params):
    """Admission-level pooling; returns ``(p, beta, theta, v_tilde)``."""
    vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    T = vs.shape[0]
    batch = PatientBatch(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                         np.zeros(T, dtype=np.int64), T, 1)
    c = _consts(params)
    p, beta, theta, vt = admission_attention_batch(ad.Tensor(vs), batch, c["W_u"], c["W_v"],
                                                   c["w_beta"], c["W_theta"])
    return p.value[0], beta.value[:, 0], theta.value, vt.value


def encode_patients(patients, X, params):
    """Encode a list of patients (each a list of code-id admissions) without a tape."""
    batch = PatientBatch.build(patients)
    p, parts = encode_batch(ad.Tensor(X), batch, _consts(params))
    return PatientEncoding(parts["v"].value, parts["vt"].value, p.value, parts["alpha"].value,
                           parts["beta"].value[:, 0], parts["theta"].value, batch)


def encode_patient(admissions, X, params):
    return encode_patients([admissions], X, params)
