"""Joint training: a JTLL pass then the base model's pass, every epoch, over shared embeddings"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from .ingest import Dataset
from .jtll import JtllConfig, jtll_epoch
from .logger import get_logger
from .models import Recommender, SharedParams, create_model
from .optim import AdamState
from .sampling import build_train_tuples, build_visitor_index
from ..config.settings import JointConfig

logger = get_logger('joint')


class RngStreams(NamedTuple):
    """Independent generators derived from one master seed"""
    init: np.random.Generator
    jtll: np.random.Generator
    base: np.random.Generator


def derive_streams(seed: int) -> RngStreams:
    """
    Split a seed into init, JTLL and base-model streams

    Toggling JTLL never shifts the other two streams.
    """
    init, jtll, base = np.random.SeedSequence(seed).spawn(3)
    return RngStreams(np.random.default_rng(init), np.random.default_rng(jtll), np.random.default_rng(base))


@dataclass
class EpochLog:
    """Losses of one joint epoch"""
    epoch: int
    jtll_loss: Optional[float]
    model_loss: float


@dataclass
class JointResult:
    """Trained model, shared embeddings and per-epoch losses"""
    model: Recommender
    params: SharedParams
    log: List[EpochLog] = field(default_factory=list)


class JointTrainer:
    """Orchestrates shared-parameter training of JTLL and a base model"""

    def __init__(self, dataset: Dataset, config: JointConfig):
        """
        Initialize trainer

        Args:
            dataset: Split dataset
            config: Validated joint configuration
        """
        self.dataset = dataset
        self.config = config.validate()
        self.streams = derive_streams(config.seed)

        # Init stream order: shared embeddings, then model weights
        self.params = SharedParams.initialize(dataset.num_users, dataset.num_pois, config.dim, self.streams.init)
        self.model = create_model(config.model, dataset.num_users, dataset.num_pois, config.dim, self.streams.init)
        self.model.fit(dataset)

        self.base_adam = AdamState(lr=config.effective_base_lr)
        self.jtll_adam = AdamState(lr=config.effective_jtll_lr)
        self.jtll_config = JtllConfig(
            batch_size=config.batch_size,
            negatives=config.negatives,
            dropout=config.dropout,
        )

        self.tuples = []
        self.index = None
        self.fixed_negatives: Optional[Dict[int, List[int]]] = None
        if config.jtll_enabled:
            self.tuples = build_train_tuples(dataset, multiplicity=config.tuple_multiplicity)
            self.index = build_visitor_index(dataset)
            if config.fixed_negatives:
                self.fixed_negatives = {}
            logger.info(f"JTLL enabled: {len(self.tuples)} training tuples")

        self.log: List[EpochLog] = []

    def run_epoch(self, epoch: int) -> EpochLog:
        """One JTLL pass (if enabled) followed by one base-model pass"""
        jtll_loss = None
        if self.config.jtll_enabled:
            jtll_loss = jtll_epoch(
                self.params, self.tuples, self.index, self.jtll_config,
                self.jtll_adam, self.streams.jtll, self.fixed_negatives
            )

        model_loss = 0.0
        if self.model.trainable:
            model_loss = self.model.train_epoch(
                self.params, self.dataset, self.config, self.base_adam, self.streams.base
            )

        entry = EpochLog(epoch, jtll_loss, model_loss)
        self.log.append(entry)
        logger.info(
            f"Epoch {epoch}/{self.config.epochs}: jtll_loss="
            f"{'off' if jtll_loss is None else f'{jtll_loss:.6f}'} model_loss={model_loss:.6f}"
        )
        return entry

    def run(self) -> JointResult:
        for epoch in range(1, self.config.epochs + 1):
            self.run_epoch(epoch)
        return JointResult(self.model, self.params, self.log)


def joint_train(dataset: Dataset, config: JointConfig) -> JointResult:
    """
    Train config.model jointly with JTLL

    Args:
        dataset: Split dataset
        config: Joint configuration

    Returns:
        JointResult with the final epoch's parameters
    """
    return JointTrainer(dataset, config).run()


def format_epoch_log(log: List[EpochLog]) -> str:
    lines = ["epoch\tjtll_loss\tmodel_loss"]
    for entry in log:
        jtll = "nan" if entry.jtll_loss is None else repr(entry.jtll_loss)
        lines.append(f"{entry.epoch}\t{jtll}\t{entry.model_loss!r}")
    return "\n".join(lines) + "\n"


def write_epoch_log(log: List[EpochLog], path: Path) -> None:
    """Write the per-epoch losses as TSV"""
    Path(path).write_text(format_epoch_log(log), encoding="utf-8")
