"""NER loss, adversarial domain loss and their weighted total."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import compute as C
from .errors import AllIgnored, EmptyBatch

SOURCE, TARGET = 0, 1


@dataclass
class LossBreakdown:
    l_ner: float
    l_ds: float
    l_dt: float
    l_adv: float
    alpha: float
    l_total: float


def ner_loss(log_probs: C.Tensor, tag_ids: np.ndarray, mask: np.ndarray | None = None) -> C.Tensor:
    """Mean token NLL over labeled, unpadded positions of a source batch."""
    targets = np.asarray(tag_ids).reshape(-1)
    if mask is not None:
        targets = np.where(np.asarray(mask).reshape(-1), targets, -1)
    n_tags = log_probs.shape[-1]
    loss, all_ignored = C.nll_loss(C.reshape(log_probs, (-1, n_tags)), targets, ignore=-1)
    if all_ignored:
        raise AllIgnored("source batch has no labeled tokens")
    return loss


def adversarial_loss(src_domain_log_probs: C.Tensor, tgt_domain_log_probs: C.Tensor):
    """Domain NLL with source rows labeled 0 and target rows labeled 1.

    Returns ``(l_ds, l_dt, l_adv)`` with ``l_adv = l_ds + l_dt``. The
    discriminator minimises it; the feature extractor sees it through the
    gradient-reversal op and so ascends it.
    """
    n_s, n_t = src_domain_log_probs.shape[0], tgt_domain_log_probs.shape[0]
    if n_s == 0 or n_t == 0:
        raise EmptyBatch("both domain batches must be nonempty")
    l_ds, _ = C.nll_loss(src_domain_log_probs, np.full(n_s, SOURCE))
    l_dt, _ = C.nll_loss(tgt_domain_log_probs, np.full(n_t, TARGET))
    return l_ds, l_dt, C.add(l_ds, l_dt)


def total_loss(l_ner, l_adv, alpha: float = 2.0):
    """``l_ner + alpha * l_adv``; accepts Tensors or plain floats."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if isinstance(l_ner, C.Tensor):
        return C.add(l_ner, C.scale(l_adv, alpha))
    return l_ner + alpha * l_adv
