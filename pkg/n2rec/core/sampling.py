"""Training tuples of visited relations and negative sampling over never-visitors"""

from typing import List, NamedTuple, Sequence

import numpy as np

from .ingest import Dataset
from .logger import get_logger

logger = get_logger('sampling')


class TrainTuple(NamedTuple):
    """A (user, POI) visited relation from the train partition"""
    user: int
    poi: int


class VisitorIndex:
    """
    Per-key sorted member sets over a universe of ids

    Built as POI -> visiting users for JTLL negatives, or transposed as
    user -> visited POIs for MF negatives. Immutable after construction.
    """

    def __init__(self, members: Sequence[np.ndarray], universe: int):
        """
        Initialize index

        Args:
            members: For each key, the ids that relate to it (any order, may repeat)
            universe: Size of the id space members are drawn from
        """
        self.universe = universe
        self._members = [np.unique(np.asarray(m, dtype=np.int64)) for m in members]
        self._member_sets = [frozenset(m.tolist()) for m in self._members]
        for key, m in enumerate(self._members):
            if m.size and (m[0] < 0 or m[-1] >= universe):
                raise ValueError(f"Member id out of range [0, {universe}) for key {key}")

    def __len__(self) -> int:
        return len(self._members)

    def visitors(self, key: int) -> np.ndarray:
        """Sorted member ids of key"""
        return self._members[key]

    def contains(self, key: int, member: int) -> bool:
        return member in self._member_sets[key]

    def complement_size(self, key: int) -> int:
        return self.universe - len(self._members[key])


def build_train_tuples(dataset: Dataset, multiplicity: bool = False) -> List[TrainTuple]:
    """
    Collect visited relations from every train partition

    Args:
        dataset: Split dataset
        multiplicity: One tuple per check-in event instead of per distinct pair

    Returns:
        Tuples ordered by user, then POI (set semantics) or visit time (multiplicity)
    """
    tuples: List[TrainTuple] = []
    for user in range(dataset.num_users):
        train = dataset.train_sequence(user)
        if multiplicity:
            tuples.extend(TrainTuple(user, c.poi) for c in train)
        else:
            tuples.extend(TrainTuple(user, poi) for poi in sorted({c.poi for c in train}))
    logger.debug(f"Built {len(tuples)} training tuples (multiplicity={multiplicity})")
    return tuples


def build_visitor_index(dataset: Dataset) -> VisitorIndex:
    """POI -> users with at least one train check-in there"""
    members: List[List[int]] = [[] for _ in range(dataset.num_pois)]
    for user in range(dataset.num_users):
        for poi in dataset.train_pois(user):
            members[poi].append(user)
    return VisitorIndex([np.array(m, dtype=np.int64) for m in members], dataset.num_users)


def build_visited_poi_index(dataset: Dataset) -> VisitorIndex:
    """User -> POIs visited in the train partition"""
    members = [np.array(sorted(dataset.train_pois(u)), dtype=np.int64) for u in range(dataset.num_users)]
    return VisitorIndex(members, dataset.num_pois)


def sample_negatives(index: VisitorIndex, key: int, k: int, rng: np.random.Generator) -> List[int]:
    """
    Draw ids that never related to key, uniformly without replacement

    Uses rejection sampling in id space; when more than half the universe is
    excluded the complement is materialized and sampled directly.

    Args:
        index: Visitor index
        key: POI (or user, for a transposed index) to sample against
        k: Requested sample count
        rng: Seeded generator

    Returns:
        min(k, complement size) distinct ids
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    available = index.complement_size(key)
    want = min(k, available)
    if want == 0:
        return []

    excluded = index.visitors(key)
    if len(excluded) > index.universe // 2:
        complement = np.setdiff1d(np.arange(index.universe, dtype=np.int64), excluded, assume_unique=True)
        return rng.choice(complement, size=want, replace=False).tolist()

    chosen: List[int] = []
    taken = set()
    while len(chosen) < want:
        for candidate in rng.integers(0, index.universe, size=2 * (want - len(chosen)) + 1).tolist():
            if candidate in taken or index.contains(key, candidate):
                continue
            taken.add(candidate)
            chosen.append(candidate)
            if len(chosen) == want:
                break
    return chosen
