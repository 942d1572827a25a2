"""Shared fixtures: small hand-built datasets and isolated logging"""

from typing import Dict, List

import numpy as np
import pytest

from n2rec.core.ingest import Dataset, RawCheckIn, index_checkins, split


def raw_from_sequences(sequences: Dict[str, List[str]], start: int = 1_000_000) -> List[RawCheckIn]:
    """One check-in per POI key, a minute apart, users in dict order"""
    raw = []
    for user, pois in sequences.items():
        for t, poi in enumerate(pois):
            raw.append(RawCheckIn(user, poi, 10.0 + 0.001 * t, 20.0 - 0.001 * t, start + 60 * t))
    return raw


def build_dataset(sequences: Dict[str, List[str]], train_fraction: float = 0.8) -> Dataset:
    return split(index_checkins(raw_from_sequences(sequences)), train_fraction)


def random_dataset(rng: np.random.Generator, max_users: int = 20, max_pois: int = 30) -> Dataset:
    num_users = int(rng.integers(2, max_users + 1))
    num_pois = int(rng.integers(3, max_pois + 1))
    sequences = {
        f"u{u}": [f"p{p}" for p in rng.integers(0, num_pois, size=int(rng.integers(3, 11)))]
        for u in range(num_users)
    }
    return build_dataset(sequences)


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    """Keep ~/.n2rec/logs inside the test's tmp dir"""
    monkeypatch.setenv("HOME", str(tmp_path))
    return tmp_path


@pytest.fixture
def make_dataset():
    return build_dataset


@pytest.fixture
def tiny_dataset() -> Dataset:
    """
    Three users, six POIs, split at 0.6

    a: p1 p2 p1 | p3 p4
    b: p2 p3    | p5 p1
    c: p4 p5 p6 | p2 p3 p6
    """
    return build_dataset({
        "a": ["p1", "p2", "p1", "p3", "p4"],
        "b": ["p2", "p3", "p5", "p1"],
        "c": ["p4", "p5", "p6", "p2", "p3", "p6"],
    }, train_fraction=0.6)


@pytest.fixture
def make_random_dataset():
    return random_dataset


@pytest.fixture
def make_raw():
    return raw_from_sequences
