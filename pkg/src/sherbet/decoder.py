"""Level-wise decoder for the historical-hierarchy proxy task and its loss."""
import numpy as np

from . import autodiff as ad
from .errors import UnknownCode

PROB_CLAMP = 1e-12


def level_plan(ont, hierarchical=True):
    """``[(h, parent_positions or None)]`` for the levels the decoder predicts."""
    if not hierarchical:
        return [(ont.H, None)]
    return [(h, ont.parent_positions(h) if h > 2 else None) for h in range(2, ont.H + 1)]


def build_targets(codes, ont, levels=None):
    """Indicator vectors of every ancestor of the recorded codes, per level.

    ``codes`` is an iterable of leaf columns (all admissions pooled).
    Returns ``{h: y_h}`` for ``h`` in ``levels`` (default ``2..H``).
    """
    levels = levels if levels is not None else range(2, ont.H + 1)
    codes = np.asarray(sorted({int(c) for c in codes}), dtype=np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= ont.n_codes):
        raise UnknownCode(f"code column outside 0..{ont.n_codes - 1}")
    out = {}
    for h in levels:
        y = np.zeros(ont.level_counts[h])
        if codes.size:
            y[ont.level_pos[ont.ancestors[codes, h - 1]]] = 1.0
        out[h] = y
    return out


def hierarchical_forward(p, weights, plan):
    """Joint probabilities per level as a chain of sigmoid conditionals.

    ``weights`` maps level ``h`` to a tensor ``(n_h, dim_p)``. The level-1
    factor is identically one and is not materialized.
    """
    out = {}
    prev = None
    for h, parents in plan:
        cond = ad.sigmoid(ad.matmul(p, ad.transpose(weights[h])))
        out[h] = cond if prev is None or parents is None else ad.hadamard(cond, ad.gather_cols(prev, parents))
        prev = out[h]
    return out


def bce(pred, target):
    """Mean binary cross-entropy; predictions are clamped away from 0 and 1."""
    pred = pred if isinstance(pred, ad.Tensor) else ad.Tensor(np.atleast_2d(pred))
    y = target if isinstance(target, ad.Tensor) else ad.Tensor(np.atleast_2d(target))
    pc = ad.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = ad.hadamard(y, ad.log(pc))
    neg = ad.hadamard(ad.add_scalar(ad.scale(y, -1.0), 1.0), ad.log(ad.add_scalar(ad.scale(pc, -1.0), 1.0)))
    return ad.scale(ad.mean(ad.add(pos, neg)), -1.0)


def ssl_loss(preds, targets):
    """Average over levels of the per-node mean BCE (also averaged over batch rows)."""
    terms = [bce(preds[h], targets[h]) for h in preds]
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.scale(total, 1.0 / len(terms))


def decode(p, weights, ont, hierarchical=True):
    """Numpy convenience wrapper around :func:`hierarchical_forward`."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    w = {h: ad.Tensor(v) for h, v in weights.items()}
    return {h: t.value for h, t in hierarchical_forward(ad.Tensor(p), w, level_plan(ont, hierarchical)).items()}
