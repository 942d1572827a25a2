"""Multi-seed A/B runs of a base model trained with and without JTLL"""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .evaluation import DEFAULT_KS, EvalReport, evaluate
from .ingest import Dataset
from .joint import joint_train
from .logger import get_logger
from ..config.settings import JointConfig

logger = get_logger('experiment')


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (0.0 for fewer than two values)"""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0, 0.0
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return float(values.mean()), std


@dataclass
class UpliftResult:
    """Per-seed reports of both arms; the compared metric is N2-Acc@k"""
    k: int = 5
    seeds: List[int] = field(default_factory=list)
    with_reports: List[EvalReport] = field(default_factory=list)
    without_reports: List[EvalReport] = field(default_factory=list)

    @property
    def with_jtll(self) -> List[float]:
        return [r.acc_at[self.k] for r in self.with_reports]

    @property
    def without_jtll(self) -> List[float]:
        return [r.acc_at[self.k] for r in self.without_reports]

    @property
    def uplifts(self) -> List[float]:
        return [a - b for a, b in zip(self.with_jtll, self.without_jtll)]

    @property
    def mean_uplift(self) -> float:
        return float(np.mean(self.uplifts)) if self.seeds else 0.0

    @property
    def wins(self) -> int:
        """Seeds where JTLL did at least as well"""
        return sum(1 for u in self.uplifts if u >= 0.0)

    @property
    def std_with(self) -> float:
        return mean_std(self.with_jtll)[1]

    @property
    def std_without(self) -> float:
        return mean_std(self.without_jtll)[1]

    def summary(self, jtll: bool) -> Dict[str, Tuple[float, float]]:
        """
        Mean and standard deviation of every metric of one arm

        Returns:
            {"acc@K": (mean, std), ..., "mrr": (mean, std)}
        """
        reports = self.with_reports if jtll else self.without_reports
        if not reports:
            return {}
        out = {
            f"acc@{k}": mean_std([r.acc_at[k] for r in reports])
            for k in reports[0].acc_at
        }
        out["mrr"] = mean_std([r.mrr for r in reports])
        return out


def run_ab(
    dataset_for_seed: Callable[[int], Dataset],
    joint_config: JointConfig,
    seeds: Sequence[int],
    ks: Sequence[int] = DEFAULT_KS,
    k: int = 5
) -> UpliftResult:
    """
    Train and evaluate both arms for every seed

    Both arms of a seed see the same dataset and the same training seed, so
    they share initialization and the base model's random stream.

    Args:
        dataset_for_seed: Split dataset to use for a seed
        joint_config: Training settings (jtll_enabled and seed overridden)
        seeds: Seeds to run
        ks: Cutoffs reported for each arm
        k: Cutoff of the compared N2-Acc@K (added to ks if missing)

    Returns:
        UpliftResult
    """
    ks = sorted(set(ks) | {k})
    result = UpliftResult(k=k)
    for seed in seeds:
        dataset = dataset_for_seed(seed)
        reports = {}
        for enabled in (True, False):
            trained = joint_train(dataset, replace(joint_config, jtll_enabled=enabled, seed=seed))
            reports[enabled] = evaluate(trained.model, trained.params, dataset, ks=ks)
        result.seeds.append(int(seed))
        result.with_reports.append(reports[True])
        result.without_reports.append(reports[False])
        logger.info(
            f"Seed {seed}: Acc@{k} with JTLL {reports[True].acc_at[k]:.4f}, "
            f"without {reports[False].acc_at[k]:.4f}"
        )
    return result


def format_uplift(result: UpliftResult, model: str) -> str:
    """mean +- std per metric for both arms, then the compared uplift"""
    with_summary, without_summary = result.summary(True), result.summary(False)
    names = list(with_summary)
    header = ["arm"] + names
    rows = []
    for label, summary in ((f"{model}", without_summary), (f"{model}-JTLL", with_summary)):
        rows.append([label] + [f"{summary[n][0]:.4f}±{summary[n][1]:.4f}" for n in names])
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header] + rows]
    lines.append(
        f"seeds={','.join(str(s) for s in result.seeds)}\tk={result.k}\t"
        f"mean_uplift={result.mean_uplift:.6f}\twins={result.wins}/{len(result.seeds)}"
    )
    return "\n".join(lines)
