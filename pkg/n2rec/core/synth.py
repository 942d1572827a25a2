"""Synthetic check-ins with planted user/POI groups"""

from dataclasses import dataclass, replace
from typing import List, Sequence

import numpy as np

from .errors import ConfigError
from .evaluation import DEFAULT_KS
from .experiment import UpliftResult, run_ab
from .ingest import Dataset, RawCheckIn, index_checkins, split
from .logger import get_logger
from ..config.settings import JointConfig

logger = get_logger('synth')

START_TIME = 1262304000  # 2010-01-01T00:00:00Z


@dataclass
class SynthConfig:
    """Synthetic dataset settings"""
    num_users: int = 500
    num_pois: int = 200
    num_groups: int = 10
    epsilon: float = 0.2      # share of visits drawn uniformly from all POIs
    min_length: int = 20
    max_length: int = 50
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if self.num_groups < 2:
            raise ConfigError(f"num_groups must be >= 2, got {self.num_groups}")
        if self.num_pois < self.num_groups or self.num_users < self.num_groups:
            raise ConfigError("num_pois and num_users must each be >= num_groups")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not 2 <= self.min_length <= self.max_length:
            raise ConfigError(f"Need 2 <= min_length <= max_length, got [{self.min_length}, {self.max_length}]")
        return self


def user_group(key: str, num_groups: int) -> int:
    """Planted group of a synthetic user key 'u<n>'"""
    return int(key[1:]) % num_groups


def poi_group(key: str, num_groups: int) -> int:
    """Planted group of a synthetic POI key 'p<n>'"""
    return int(key[1:]) % num_groups


def generate(config: SynthConfig) -> Dataset:
    """
    Draw per-user check-in sequences biased towards the user's own group

    Users and POIs join groups round-robin. Each visit stays inside the
    user's group with probability 1 - epsilon, otherwise it is uniform over
    all POIs. Every user gets an independent stream derived from the seed.

    Args:
        config: Generator settings

    Returns:
        Unsplit Dataset (POIs nobody drew are absent)
    """
    config.validate()
    G = config.num_groups
    poi_stream, *user_streams = np.random.SeedSequence(config.seed).spawn(config.num_users + 1)

    # group centroids spread over the map, POIs jittered around them
    coord_rng = np.random.default_rng(poi_stream)
    centroids = np.column_stack([
        -45.0 + 90.0 * (np.arange(G) + 0.5) / G,
        -150.0 + 300.0 * (np.arange(G) + 0.5) / G,
    ])
    poi_ids = np.arange(config.num_pois)
    coords = centroids[poi_ids % G] + coord_rng.normal(0.0, 0.01, size=(config.num_pois, 2))
    members = [poi_ids[poi_ids % G == g] for g in range(G)]

    raw: List[RawCheckIn] = []
    for user, stream in enumerate(user_streams):
        rng = np.random.default_rng(stream)
        length = int(rng.integers(config.min_length, config.max_length + 1))
        own = members[user % G]
        in_group = rng.random(length) < 1.0 - config.epsilon
        picks = np.where(
            in_group,
            own[rng.integers(0, len(own), size=length)],
            rng.integers(0, config.num_pois, size=length),
        )
        times = START_TIME + np.cumsum(rng.integers(600, 86400, size=length))
        raw.extend(
            RawCheckIn(f"u{user}", f"p{poi}", float(coords[poi, 0]), float(coords[poi, 1]), int(ts))
            for poi, ts in zip(picks.tolist(), times.tolist())
        )

    dataset = index_checkins(raw)
    logger.info(
        f"Generated {dataset.num_users} users, {dataset.num_pois} POIs, "
        f"{dataset.num_visits} check-ins (G={G}, epsilon={config.epsilon})"
    )
    return dataset


def run_uplift(
    synth_config: SynthConfig,
    joint_config: JointConfig,
    seeds: Sequence[int],
    train_fraction: float = 0.8,
    k: int = 5,
    ks: Sequence[int] = DEFAULT_KS
) -> UpliftResult:
    """
    A/B comparison of the base model trained with and without JTLL

    Each seed generates its own dataset and seeds both arms identically.

    Args:
        synth_config: Dataset settings (seed overridden per run)
        joint_config: Training settings (jtll_enabled and seed overridden)
        seeds: Seeds to run
        train_fraction: Chronological split ratio
        k: Cutoff of the compared N2-Acc@K
        ks: Cutoffs reported for each arm

    Returns:
        UpliftResult
    """
    return run_ab(
        lambda seed: split(generate(replace(synth_config, seed=seed)), train_fraction),
        joint_config, seeds, ks=ks, k=k
    )
