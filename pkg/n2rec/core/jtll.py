"""Joint triplet loss over (anchor POI, positive user, negative users)"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import TrainingError
from .logger import get_logger
from .models import SharedParams
from .optim import (
    AdamState,
    DropoutSpec,
    RowGradients,
    adam_step,
    apply_dropout,
    negative_sampling_terms,
    pad_negatives,
)
from .sampling import TrainTuple, VisitorIndex, sample_negatives

logger = get_logger('jtll')


@dataclass
class JtllConfig:
    """Settings of one JTLL pass"""
    batch_size: int = 64
    negatives: int = 5
    dropout: float = 0.8


@dataclass
class JtllBatchItem:
    """One training tuple with its sampled negative users"""
    tuple: TrainTuple
    negatives: List[int]


@dataclass
class JtllGradients:
    """Gradients of the triplet loss for one tuple"""
    user: np.ndarray        # d(loss)/d(u_h)
    poi: np.ndarray         # d(loss)/d(l_b)
    negatives: np.ndarray   # (n, d), d(loss)/d(u_n)


@dataclass
class JtllMasks:
    """Dropout masks applied to each row of one tuple"""
    user: np.ndarray
    poi: np.ndarray
    negatives: np.ndarray


def _prepare(u_h, l_b, negs):
    u_h = np.asarray(u_h, dtype=np.float64)
    l_b = np.asarray(l_b, dtype=np.float64)
    if u_h.ndim != 1 or u_h.shape != l_b.shape:
        raise ValueError(f"User row {u_h.shape} and POI row {l_b.shape} must be equal-length vectors")
    dim = u_h.shape[0]
    negs = np.asarray(negs, dtype=np.float64)
    if negs.size == 0:
        negs = np.zeros((0, dim))
    if negs.ndim != 2 or negs.shape[1] != dim:
        raise ValueError(f"Negative rows {negs.shape} do not match dim {dim}")
    return u_h, l_b, negs


def _terms(u_h, l_b, negs, masks: Optional[JtllMasks]):
    u_h, l_b, negs = _prepare(u_h, l_b, negs)
    if masks is not None:
        u_h, l_b, negs = u_h * masks.user, l_b * masks.poi, negs * masks.negatives
    # the POI is the anchor; the positive and negative roles are users
    return negative_sampling_terms(
        l_b[None, :], u_h[None, :], negs[None, :, :], np.ones((1, len(negs)), dtype=bool)
    )


def jtll_loss(u_h, l_b, negs, masks: Optional[JtllMasks] = None) -> float:
    """
    -log s(u_h . l_b) - sum_n log s(-u_n . l_b)

    Args:
        u_h: Positive user row (d,)
        l_b: Anchor POI row (d,)
        negs: Negative user rows (n, d), n may be 0
        masks: Dropout masks applied to the rows before the dot products

    Returns:
        Nonnegative loss
    """
    loss, _, _, _ = _terms(u_h, l_b, negs, masks)
    return float(loss[0])


def jtll_grads(u_h, l_b, negs, masks: Optional[JtllMasks] = None) -> JtllGradients:
    """
    Analytic gradients of jtll_loss

    With masks, each gradient is taken w.r.t. the undropped row, i.e.
    multiplied by the same mask used in the forward pass.
    """
    _, d_anchor, d_positive, d_negatives = _terms(u_h, l_b, negs, masks)
    grads = JtllGradients(user=d_positive[0], poi=d_anchor[0], negatives=d_negatives[0])
    if masks is not None:
        grads.user = grads.user * masks.user
        grads.poi = grads.poi * masks.poi
        grads.negatives = grads.negatives * masks.negatives
    return grads


def draw_batch(
    tuples: Sequence[TrainTuple],
    positions: np.ndarray,
    index: VisitorIndex,
    k: int,
    rng: np.random.Generator,
    fixed: Optional[Dict[int, List[int]]] = None
) -> List[JtllBatchItem]:
    """
    Pair each tuple with negative users who never visited its POI

    Args:
        tuples: Full training tuple list
        positions: Indices into tuples forming the batch
        index: POI -> visitors index
        k: Negatives per tuple
        rng: Generator for sampling
        fixed: Cache of negatives by tuple position, reused when present
    """
    items = []
    for pos in positions.tolist():
        tup = tuples[pos]
        if fixed is not None and pos in fixed:
            negs = fixed[pos]
        else:
            negs = sample_negatives(index, tup.poi, k, rng)
            if fixed is not None:
                fixed[pos] = negs
        items.append(JtllBatchItem(tup, negs))
    return items


def jtll_epoch(
    params: SharedParams,
    tuples: Sequence[TrainTuple],
    index: VisitorIndex,
    config: JtllConfig,
    adam: AdamState,
    rng: np.random.Generator,
    fixed: Optional[Dict[int, List[int]]] = None
) -> float:
    """
    One pass of the triplet loss over the training tuples

    Tuples are shuffled and processed in batches; each batch sums the
    per-tuple gradients and takes one Adam step on the touched rows of the
    shared user and POI matrices.

    Args:
        params: Shared embeddings, updated in place
        tuples: Visited relations
        index: POI -> visitors index for negative sampling
        config: Batch size, negatives per tuple, dropout
        adam: Optimizer state owned by the JTLL pass
        rng: Generator for shuffling, negatives and dropout
        fixed: Negative cache when negatives are drawn once for all epochs

    Returns:
        Mean loss per tuple (0.0 for an empty tuple list)
    """
    if not tuples:
        return 0.0

    dropout = DropoutSpec(p=config.dropout, training=True)
    weights = params.as_dict()
    order = rng.permutation(len(tuples))
    total = 0.0

    for batch_no, start in enumerate(range(0, len(tuples), config.batch_size)):
        items = draw_batch(tuples, order[start:start + config.batch_size], index, config.negatives, rng, fixed)
        users = np.array([it.tuple.user for it in items], dtype=np.int64)
        pois = np.array([it.tuple.poi for it in items], dtype=np.int64)
        neg_ids, valid = pad_negatives([it.negatives for it in items])

        user_rows, user_mask = apply_dropout(params.W_user[users], dropout, rng)
        poi_rows, poi_mask = apply_dropout(params.W_poi[pois], dropout, rng)
        neg_rows, neg_mask = apply_dropout(params.W_user[neg_ids], dropout, rng)

        loss, d_poi, d_user, d_neg = negative_sampling_terms(poi_rows, user_rows, neg_rows, valid)
        batch_loss = float(loss.sum())
        if not np.isfinite(batch_loss):
            raise TrainingError(f"Non-finite JTLL loss in batch {batch_no}")

        d_user *= user_mask
        d_poi *= poi_mask
        d_neg *= neg_mask

        grads = {
            "W_user": RowGradients.accumulate(
                np.concatenate([users, neg_ids[valid]]),
                np.concatenate([d_user, d_neg[valid]])
            ),
            "W_poi": RowGradients.accumulate(pois, d_poi),
        }
        adam_step(weights, grads, adam)
        total += batch_loss
        logger.debug(f"JTLL batch {batch_no}: loss {batch_loss / len(items):.6f}")

    return total / len(tuples)
