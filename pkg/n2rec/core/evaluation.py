"""N2 evaluation: rank unvisited candidates and compute Acc@K and MRR"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import EvaluationError
from .ingest import Dataset
from .logger import get_logger
from .models import Query, Recommender, SharedParams

logger = get_logger('evaluation')

DEFAULT_KS = (1, 5, 10, 20)


@dataclass
class UserBreakdown:
    """Per-user hit counts and reciprocal rank sum"""
    num_samples: int
    hits: Dict[int, int]
    reciprocal_sum: float


@dataclass
class EvalReport:
    """N2-Acc@K and N2-MRR over all qualifying test check-ins"""
    acc_at: Dict[int, float]
    mrr: float
    num_samples: int
    per_user: Optional[Dict[int, UserBreakdown]] = field(default=None, compare=False)


def candidate_set(dataset: Dataset, user: int) -> np.ndarray:
    """
    POIs the user has not visited in training

    Returns:
        Ascending POI ids, fixed for all of the user's test steps
    """
    visited = np.fromiter(dataset.train_pois(user), dtype=np.int64)
    mask = np.ones(dataset.num_pois, dtype=bool)
    mask[visited] = False
    return np.flatnonzero(mask)


def rank_candidates(scores: Sequence[float], candidates: Sequence[int]) -> List[int]:
    """
    Order candidates by descending score, ties by ascending POI id

    Abstained (-inf) candidates come last.

    Raises:
        EvaluationError: on NaN scores
    """
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.int64)
    if scores.shape != candidates.shape:
        raise ValueError(f"{scores.shape[0]} scores for {candidates.shape[0]} candidates")
    if np.isnan(scores).any():
        raise EvaluationError("NaN score in candidate ranking")
    # lexsort sorts by the last key first
    return candidates[np.lexsort((candidates, -scores))].tolist()


def rank_of(scores: np.ndarray, candidates: np.ndarray, target: int) -> Optional[int]:
    """
    1-based position of target under rank_candidates ordering

    Returns:
        Rank, or None when the target is abstained or not a candidate
    """
    pos = np.searchsorted(candidates, target)
    if pos >= len(candidates) or candidates[pos] != target:
        return None
    score = scores[pos]
    if score == -np.inf:
        return None
    ahead = np.count_nonzero(scores > score) + np.count_nonzero((scores == score) & (candidates < target))
    return int(ahead) + 1


def evaluate(
    model: Recommender,
    params: SharedParams,
    dataset: Dataset,
    ks: Sequence[int] = DEFAULT_KS,
    per_user: bool = False
) -> EvalReport:
    """
    Score every test check-in at a POI the user never visited in training

    Sequential models read the full chronological prefix (train plus earlier
    test check-ins); the candidate space stays L minus the train POIs.

    Args:
        model: Trained model
        params: Shared embeddings
        dataset: Split dataset
        ks: Cutoffs for Acc@K
        per_user: Keep a per-user breakdown

    Returns:
        EvalReport

    Raises:
        EvaluationError: if no test check-in qualifies or a score is NaN
    """
    ks = sorted(set(int(k) for k in ks))
    breakdown: Dict[int, UserBreakdown] = {}

    for user in range(dataset.num_users):
        train_pois = dataset.train_pois(user)
        candidates = candidate_set(dataset, user)
        sequence = [c.poi for c in dataset.sequences[user]]
        split_point = dataset.split_points[user]

        hits = {k: 0 for k in ks}
        reciprocal_sum = 0.0
        samples = 0
        static_scores = None

        for i in range(split_point, len(sequence)):
            target = sequence[i]
            if target in train_pois:
                continue

            if model.sequential or static_scores is None:
                scores = model.score_candidates(params, Query(user, sequence[:i]), candidates)
                if np.isnan(scores).any():
                    raise EvaluationError(f"NaN score for user {user} at step {i}")
                if not model.sequential:
                    static_scores = scores
            else:
                scores = static_scores

            samples += 1
            rank = rank_of(scores, candidates, target)
            if rank is None:
                continue
            reciprocal_sum += 1.0 / rank
            for k in ks:
                if rank <= k:
                    hits[k] += 1

        if samples:
            breakdown[user] = UserBreakdown(samples, hits, reciprocal_sum)

    total = sum(b.num_samples for b in breakdown.values())
    if total == 0:
        raise EvaluationError("No test check-in at an unvisited POI; nothing to evaluate")

    # users in ascending id order keeps the float sum reproducible
    report = EvalReport(
        acc_at={k: sum(breakdown[u].hits[k] for u in sorted(breakdown)) / total for k in ks},
        mrr=sum(breakdown[u].reciprocal_sum for u in sorted(breakdown)) / total,
        num_samples=total,
        per_user=breakdown if per_user else None,
    )
    logger.info(
        f"Evaluated {model.kind} on {total} samples: "
        + " ".join(f"Acc@{k}={v:.4f}" for k, v in report.acc_at.items())
        + f" MRR={report.mrr:.4f}"
    )
    return report


def format_table(report: EvalReport) -> str:
    """Aligned human-readable report"""
    rows = [(f"N2-Acc@{k}", f"{v:.4f}") for k, v in report.acc_at.items()]
    rows.append(("N2-MRR", f"{report.mrr:.4f}"))
    rows.append(("samples", str(report.num_samples)))
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value:>10}" for name, value in rows)


def format_record(report: EvalReport, dataset: str, model: str, jtll: bool, seed: int) -> str:
    """Single-line machine-readable report"""
    fields = [f"dataset={dataset}", f"model={model}", f"jtll={'on' if jtll else 'off'}", f"seed={seed}"]
    fields.extend(f"acc@{k}={v:.6f}" for k, v in report.acc_at.items())
    fields.append(f"mrr={report.mrr:.6f}")
    fields.append(f"n_samples={report.num_samples}")
    return "\t".join(fields)
