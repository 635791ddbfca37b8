"""Parameter container tying the encoder to its decoder and task head."""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .decoder import bce, hierarchical_forward, level_plan, ssl_loss
from .encoder import PatientBatch, encode_batch, gnn_forward
from .errors import HeadMissing

ENCODER_KEYS = ("W_c", "w_alpha", "W_u", "W_v", "w_beta", "W_theta")


@dataclass
class ModelConfig:
    embed_dim: int = 128
    hidden_dim: int = 64
    patient_dim: int = 64
    code_attention_dim: int = 64
    admission_attention_dim: int = 32
    gnn_layers: int = 1
    graph_dropout: float = 0.2
    decoder_dropout: float = 0.02
    use_graph: bool = True
    hierarchical: bool = True


def glorot(rng, rows, cols):
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


class SherbetModel:
    """All trainable arrays live in ``params``; forward passes run on a tape.

    Parameters
    ----------
    ont : Ontology
        Padded ontology; fixes the decoder level sizes.
    A_hat : ndarray
        Normalized co-occurrence adjacency over ``C``.
    config : ModelConfig
    params : dict of str to ndarray
    """

    def __init__(self, ont, A_hat, config, params):
        self.ont = ont
        self.A_hat = np.asarray(A_hat, dtype=np.float64)
        self.config = config
        self.params = params
        self.plan = level_plan(ont, config.hierarchical)

    @classmethod
    def create(cls, ont, A_hat, E, config, rng):
        cfg = config
        E = np.asarray(E, dtype=np.float64)
        d = E.shape[1]
        params = {"E": E.copy()}
        m = cfg.hidden_dim if cfg.use_graph else d
        if cfg.use_graph:
            dims = [d] + [cfg.hidden_dim] * cfg.gnn_layers
            for layer in range(cfg.gnn_layers):
                params[f"W_g{layer}"] = glorot(rng, dims[layer], dims[layer + 1])
        a, b, p = cfg.code_attention_dim, cfg.admission_attention_dim, cfg.patient_dim
        params["W_c"] = glorot(rng, a, m)
        params["w_alpha"] = glorot(rng, a, 1)
        params["W_u"] = glorot(rng, p, m)
        params["W_v"] = glorot(rng, b, p)
        params["w_beta"] = glorot(rng, b, 1)
        params["W_theta"] = glorot(rng, b, p)
        for h, _ in level_plan(ont, cfg.hierarchical):
            params[f"dec_{h}"] = glorot(rng, ont.level_counts[h], p)
        return cls(ont, A_hat, cfg, params)

    # -- parameter groups -------------------------------------------------
    def encoder_names(self):
        gnn = [k for k in self.params if k.startswith("W_g")]
        return ["E"] + sorted(gnn) + list(ENCODER_KEYS)

    def decoder_names(self):
        return [f"dec_{h}" for h, _ in self.plan]

    def add_head(self, out_dim, rng=None):
        # zero start: every output begins at 0.5 whatever the scale of p
        self.params["head"] = np.zeros((out_dim, self.config.patient_dim))

    @property
    def has_head(self):
        return "head" in self.params

    def leaves(self, tape, names):
        """Tape tensors for ``names`` (trainable) and constants for everything else."""
        names = set(names)
        return {k: tape.leaf(v, k) if k in names else tape.const(v) for k, v in self.params.items()}

    def constants(self):
        return {k: ad.Tensor(v) for k, v in self.params.items()}

    # -- forward ----------------------------------------------------------
    def hidden(self, P, training=False, rng=None):
        if not self.config.use_graph:
            return P["E"]
        weights = [P[f"W_g{layer}"] for layer in range(self.config.gnn_layers)]
        return gnn_forward(self.A_hat, P["E"], weights, self.config.graph_dropout, rng, training)

    def encode(self, P, batch, training=False, rng=None):
        X = self.hidden(P, training, rng)
        p, parts = encode_batch(X, batch, P)
        parts["X"] = X
        return p, parts

    def ssl_objective(self, P, batch, targets, training=False, rng=None):
        p, _ = self.encode(P, batch, training, rng)
        p = ad.dropout(p, self.config.decoder_dropout, rng, training)
        weights = {h: P[f"dec_{h}"] for h, _ in self.plan}
        return ssl_loss(hierarchical_forward(p, weights, self.plan), targets)

    def head_probs(self, P, p):
        if "head" not in P:
            raise HeadMissing("no fine-tune head; run finetune first")
        return ad.sigmoid(ad.matmul(p, ad.transpose(P["head"])))

    def finetune_objective(self, P, batch, labels, training=False, rng=None):
        p, _ = self.encode(P, batch, training, rng)
        p = ad.dropout(p, self.config.decoder_dropout, rng, training)
        return bce(self.head_probs(P, p), labels)

    # -- inference --------------------------------------------------------
    def predict(self, patients, batch_size=256):
        """Task-head probabilities for patients given as lists of code-id admissions."""
        P = self.constants()
        out = []
        for lo in range(0, len(patients), batch_size):
            batch = PatientBatch.build(patients[lo:lo + batch_size])
            p, _ = self.encode(P, batch)
            out.append(self.head_probs(P, p).value)
        return np.vstack(out) if out else np.zeros((0, self.params["head"].shape[0]))

    def hidden_embeddings(self):
        return self.hidden(self.constants()).value

    def patient_embeddings(self, patients):
        P = self.constants()
        return self.encode(P, PatientBatch.build(patients))[0].value
