"""Poincare-ball pre-training of the code hierarchy with information flow.

Each node carries a shared and a local vector plus a mixing logit. The
public embedding mixes the two; a single flow pass then replaces the shared
vector with the parent's public embedding and the local vector with the
mean of the children's local vectors before mixing again. Training pulls
tree neighbours together under the Poincare distance with a sampled softmax.
"""
import csv
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import EmptyEdgeSet, NonFiniteLoss, PointOutsideBall
from .optim import Adam, hyperbolic_schedule, lr_at

logger = logging.getLogger(__name__)

BALL_EPS = 1e-5
MAX_NORM = 1.0 - BALL_EPS


def poincare_distance(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx = float(x @ x)
    ny = float(y @ y)
    if nx >= 1.0 or ny >= 1.0:
        raise PointOutsideBall(f"norms {np.sqrt(nx):.6g}, {np.sqrt(ny):.6g} not inside the unit ball")
    diff = float((x - y) @ (x - y))
    return float(np.arccosh(1.0 + 2.0 * diff / ((1.0 - nx) * (1.0 - ny))))


@dataclass
class HyperbolicParams:
    shared: np.ndarray  # (N, d)
    local: np.ndarray   # (N, d)
    logit: np.ndarray   # (N, 1); mixing weight is sigmoid(logit)

    @classmethod
    def init(cls, n_nodes, dim, rng, scale=1e-3):
        s = rng.uniform(-scale, scale, size=(n_nodes, dim))
        t = rng.uniform(-scale, scale, size=(n_nodes, dim))
        return cls(s, t, np.zeros((n_nodes, 1)))

    def as_dict(self):
        return {"shared": self.shared, "local": self.local, "logit": self.logit}


@dataclass
class PublicEmbeddings:
    pre_flow: np.ndarray  # e' per node
    post_flow: np.ndarray  # e per node
    leaves: np.ndarray     # rows of e for C, in leaf order


class FlowPlan:
    """Index structures for one flow pass over a fixed tree."""

    def __init__(self, ont):
        n = len(ont)
        self.n = n
        # rows >= n of the stacked [e'; s] matrix are the node's own shared vector
        self.down = np.where(ont.parent >= 0, ont.parent, np.arange(n) + n)
        M = np.zeros((n, n))
        for i, kids in enumerate(ont.children):
            if kids:
                M[i, list(kids)] = 1.0 / len(kids)
            else:
                M[i, i] = 1.0
        self.up = M
        self.leaf_ids = ont.leaf_codes


def flow_on_tape(shared, local, logit, plan):
    """Return ``(e', e)`` tensors; ``e`` is rescaled into the ball."""
    lam = ad.sigmoid(logit)
    rest = ad.add_scalar(ad.scale(lam, -1.0), 1.0)
    e_pre = ad.scale_rows(lam, shared) + ad.scale_rows(rest, local)
    s_new = ad.gather_rows(ad.concat_rows(e_pre, shared), plan.down)
    t_new = ad.matmul(ad.Tensor(plan.up), local)
    e = ad.scale_rows(lam, s_new) + ad.scale_rows(rest, t_new)
    return e_pre, ad.ball_rescale(e, MAX_NORM)


def information_flow(params, ont, plan=None):
    plan = plan or FlowPlan(ont)
    e_pre, e = flow_on_tape(ad.Tensor(params.shared), ad.Tensor(params.local),
                            ad.Tensor(params.logit), plan)
    return PublicEmbeddings(e_pre.value, e.value, e.value[plan.leaf_ids])


def tree_pairs(ont, both_directions=False):
    pairs = [(p, c) for p, c in ont.edges()]
    if both_directions:
        pairs += [(c, p) for p, c in ont.edges()]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


class NegativeSampler:
    """Draws nodes that are neither ``i`` nor adjacent to ``i`` in the tree.

    With ``full=True`` every non-adjacent node is returned instead of a
    sample. Rows are padded and the returned mask marks real entries.
    """

    def __init__(self, ont, k=20, seed=0, full=False):
        self.k = k
        self.full = full
        self.rng = np.random.default_rng(seed)
        n = len(ont)
        adj = [set() for _ in range(n)]
        for p, c in ont.edges():
            adj[p].add(c)
            adj[c].add(p)
        self.candidates = [np.array([j for j in range(n) if j != i and j not in adj[i]], dtype=np.int64)
                           for i in range(n)]

    def sample(self, sources):
        sources = np.asarray(sources, dtype=np.int64)
        if self.full:
            width = max((self.candidates[i].size for i in sources), default=0)
        else:
            width = self.k
        neg = np.repeat(sources[:, None], width, axis=1)
        mask = np.zeros((sources.size, width), dtype=bool)
        for r, i in enumerate(sources):
            cand = self.candidates[i]
            if cand.size == 0 or width == 0:
                continue
            if self.full:
                neg[r, :cand.size] = cand
                mask[r, :cand.size] = True
            else:
                neg[r] = cand[self.rng.integers(0, cand.size, size=width)]
                mask[r] = True
        return neg, mask


def reconstruction_loss_on_tape(emb, pairs, neg, mask):
    """Sum over pairs of ``-log softmax`` of the positive among ``{j} + negatives``."""
    if len(pairs) == 0:
        raise EmptyEdgeSet("no tree edges to reconstruct")
    P, K = neg.shape
    I = np.repeat(pairs[:, 0], K + 1)
    J = np.concatenate([pairs[:, 1:2], neg], axis=1).reshape(-1)
    d = ad.reshape(ad.poincare_distance_rows(emb, I, J), (P, K + 1))
    bias = np.zeros((P, K + 1))
    bias[:, 1:][~mask] = -np.inf
    logp = ad.log_softmax_rows(ad.add(ad.scale(d, -1.0), ad.Tensor(bias)))
    return ad.scale(ad.total(ad.gather_cols(logp, [0])), -1.0)


def reconstruction_loss(emb, pairs, sampler):
    """Reconstruction loss of ``PublicEmbeddings`` (or a node matrix) for ``pairs``."""
    E = emb.post_flow if isinstance(emb, PublicEmbeddings) else np.asarray(emb)
    if np.any(np.sum(E * E, axis=1) >= 1.0):
        raise PointOutsideBall("embedding rows must lie inside the unit ball")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise EmptyEdgeSet("no tree edges to reconstruct")
    neg, mask = sampler.sample(pairs[:, 0])
    return reconstruction_loss_on_tape(ad.Tensor(E), pairs, neg, mask).item()


@dataclass
class HyperbolicConfig:
    dim: int = 128
    epochs: int = 500
    lr: float = 0.01
    subtractive_decay: bool = False
    negatives: int = 20
    batch_size: int = 256
    full_denominator: bool = False
    both_directions: bool = False
    riemannian: bool = False
    seed: int = 0


def project_rows(x, max_norm=MAX_NORM):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    over = norms > max_norm
    np.divide(x * max_norm, norms, out=x, where=over)
    return x


def train_hyperbolic(ont, config=None, callback=None):
    """Pre-train node embeddings and return ``(E, params, loss_history)``.

    ``E`` holds the post-flow embeddings of the leaves in ``C`` order.
    ``callback(epoch, loss, lr, params)`` runs after every epoch.
    """
    cfg = config or HyperbolicConfig()
    rng = np.random.default_rng(cfg.seed)
    params = HyperbolicParams.init(len(ont), cfg.dim, rng)
    store = params.as_dict()
    plan = FlowPlan(ont)
    pairs = tree_pairs(ont, cfg.both_directions)
    if len(pairs) == 0:
        raise EmptyEdgeSet("ontology has a single node; nothing to reconstruct")
    sampler = NegativeSampler(ont, cfg.negatives, seed=cfg.seed + 1, full=cfg.full_denominator)
    opt = Adam(lr=cfg.lr)
    schedule = hyperbolic_schedule(cfg.lr, cfg.subtractive_decay)
    history = []
    for epoch in range(cfg.epochs):
        opt.lr = lr_at(schedule, epoch)
        order = rng.permutation(len(pairs))
        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = pairs[order[lo:lo + cfg.batch_size]]
            neg, mask = sampler.sample(batch[:, 0])
            tape = ad.Tape()
            leaves = {k: tape.leaf(v, k) for k, v in store.items()}
            _, e = flow_on_tape(leaves["shared"], leaves["local"], leaves["logit"], plan)
            loss = reconstruction_loss_on_tape(e, batch, neg, mask)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLoss(f"reconstruction loss is {value} at epoch {epoch}")
            tape.backward(loss)
            grads = tape.grads()
            if cfg.riemannian:
                for k in ("shared", "local"):
                    sq = np.sum(store[k] ** 2, axis=1, keepdims=True)
                    grads[k] = grads[k] * (1.0 - sq) ** 2 / 4.0
            opt.step(store, grads)
            project_rows(store["shared"])
            project_rows(store["local"])
            total += value
        history.append(total / len(pairs))
        if callback is not None:
            callback(epoch, history[-1], opt.lr, params)
    emb = information_flow(params, ont, plan)
    return emb.leaves.copy(), params, history


def parent_rank_success(ont, E_all, n_neg=50, top=0.2, seed=0):
    """Fraction of non-root nodes whose parent is closer than all but ``top`` of sampled non-neighbours.

    Distances are computed exhaustively per node; negatives are drawn with
    replacement from the node's non-adjacent set.
    """
    rng = np.random.default_rng(seed)
    sampler = NegativeSampler(ont, k=n_neg)
    hits = 0
    total = 0
    for i in range(len(ont)):
        p = int(ont.parent[i])
        cand = sampler.candidates[i]
        if p < 0 or cand.size == 0:
            continue
        negs = cand[rng.integers(0, cand.size, size=n_neg)]
        d_par = poincare_distance(E_all[i], E_all[p])
        closer = sum(poincare_distance(E_all[i], E_all[j]) < d_par for j in negs)
        hits += closer <= top * n_neg
        total += 1
    return hits / total


def write_embedding_csv(path, labels, matrix, prefix="dim_"):
    """One row per code, floats in shortest round-trip form."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code"] + [f"{prefix}{k}" for k in range(matrix.shape[1])])
        for lab, row in zip(labels, matrix):
            w.writerow([lab] + [repr(float(v)) for v in row])


def read_embedding_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    labels = [r[0] for r in rows[1:]]
    return labels, np.array([[float(v) for v in r[1:]] for r in rows[1:]])
