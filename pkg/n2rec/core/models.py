"""Base recommenders scoring POIs from shared user and POI embeddings"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ModelError, TrainingError
from .ingest import Dataset
from .logger import get_logger
from .optim import (
    AdamState,
    RowGradients,
    adam_step,
    init_embedding,
    negative_sampling_terms,
    pad_negatives,
    sigmoid,
)
from .sampling import build_train_tuples, build_visited_poi_index, sample_negatives

logger = get_logger('models')

# Score of POIs a model declines to rank
ABSTAIN = -np.inf


@dataclass
class SharedParams:
    """User and POI embedding matrices shared by JTLL and the base model"""
    W_user: np.ndarray  # (M, d)
    W_poi: np.ndarray   # (Q, d)

    @classmethod
    def initialize(cls, num_users: int, num_pois: int, dim: int, rng: np.random.Generator) -> "SharedParams":
        return cls(init_embedding(num_users, dim, rng), init_embedding(num_pois, dim, rng))

    @property
    def dim(self) -> int:
        return self.W_user.shape[1]

    def as_dict(self) -> Dict[str, np.ndarray]:
        """Views of the matrices, for in-place optimizer updates"""
        return {"W_user": self.W_user, "W_poi": self.W_poi}

    def copy(self) -> "SharedParams":
        return SharedParams(self.W_user.copy(), self.W_poi.copy())

    def validate(self, num_users: int, num_pois: int) -> None:
        if self.W_user.shape[0] != num_users or self.W_poi.shape[0] != num_pois:
            raise ModelError(
                f"Embedding rows ({self.W_user.shape[0]}, {self.W_poi.shape[0]}) "
                f"do not match dataset ({num_users}, {num_pois})"
            )
        if self.W_user.shape[1] != self.W_poi.shape[1]:
            raise ModelError("User and POI embeddings differ in dimension")
        if not (np.isfinite(self.W_user).all() and np.isfinite(self.W_poi).all()):
            raise ModelError("Embeddings contain non-finite values")


@dataclass
class Query:
    """A user and the POIs of their chronological history"""
    user: int
    history: Sequence[int]


def _softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-wise cross entropy over all columns

    Returns:
        (loss per row, d(loss)/d(logits))
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(targets))
    loss = log_norm - shifted[rows, targets]
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, targets] -= 1.0
    return loss, grad


class Recommender:
    """Common interface of all base models"""

    kind = ""
    trainable = True    # has an epoch-based objective
    sequential = False  # scores depend on the history

    def __init__(self, num_users: int, num_pois: int, dim: int):
        """
        Initialize model

        Args:
            num_users: M
            num_pois: Q
            dim: Embedding dimension d
        """
        self.num_users = num_users
        self.num_pois = num_pois
        self.dim = dim

    def fit(self, dataset: Dataset) -> None:
        """Count-based fitting; a no-op for gradient-trained models"""

    def score_all(self, params: SharedParams, query: Query) -> np.ndarray:
        """Scores of every POI for query, shape (Q,)"""
        raise NotImplementedError

    def score_candidates(self, params: SharedParams, query: Query, candidates: Sequence[int]) -> np.ndarray:
        """
        Score a subset of POIs

        Args:
            params: Shared embeddings
            query: User and history
            candidates: POI ids in [0, Q)

        Returns:
            One score per candidate, ABSTAIN where the model declines
        """
        candidates = np.asarray(candidates, dtype=np.int64)
        if candidates.size and (candidates.min() < 0 or candidates.max() >= self.num_pois):
            raise ModelError(f"Candidate POI id out of range [0, {self.num_pois})")
        return self.score_all(params, query)[candidates]

    def train_epoch(self, params: SharedParams, dataset: Dataset, config, adam: AdamState,
                    rng: np.random.Generator) -> float:
        """
        One optimization pass

        Returns:
            Mean training loss
        """
        return 0.0

    def parameters(self) -> Dict[str, np.ndarray]:
        """Model-specific arrays (not the shared embeddings)"""
        return {}

    def load_parameters(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, value in arrays.items():
            setattr(self, name, value)


class TopRecommender(Recommender):
    """Ranks POIs by global check-in frequency in the train partitions"""

    kind = "top"
    trainable = False

    def __init__(self, num_users: int, num_pois: int, dim: int):
        super().__init__(num_users, num_pois, dim)
        self.frequency = np.zeros(num_pois)

    def fit(self, dataset: Dataset) -> None:
        counts = np.zeros(self.num_pois)
        for user in range(dataset.num_users):
            for c in dataset.train_sequence(user):
                counts[c.poi] += 1
        self.frequency = counts

    def score_all(self, params: SharedParams, query: Query) -> np.ndarray:
        return self.frequency.copy()

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"frequency": self.frequency}


class UserTopRecommender(Recommender):
    """Ranks POIs by the user's own train frequency; abstains on unvisited POIs"""

    kind = "utop"
    trainable = False

    def __init__(self, num_users: int, num_pois: int, dim: int):
        super().__init__(num_users, num_pois, dim)
        self.visits = np.zeros((0, 3), dtype=np.int64)  # (user, poi, count) rows
        self._counts: Dict[int, Dict[int, int]] = {}

    def fit(self, dataset: Dataset) -> None:
        rows: List[Tuple[int, int, int]] = []
        for user in range(dataset.num_users):
            pois, counts = np.unique([c.poi for c in dataset.train_sequence(user)], return_counts=True)
            rows.extend((user, int(p), int(n)) for p, n in zip(pois, counts))
        self.load_parameters({"visits": np.array(rows, dtype=np.int64).reshape(-1, 3)})

    def load_parameters(self, arrays: Dict[str, np.ndarray]) -> None:
        self.visits = np.asarray(arrays["visits"], dtype=np.int64).reshape(-1, 3)
        self._counts = {}
        for user, poi, count in self.visits.tolist():
            self._counts.setdefault(user, {})[poi] = count

    def score_all(self, params: SharedParams, query: Query) -> np.ndarray:
        scores = np.full(self.num_pois, ABSTAIN)
        for poi, count in self._counts.get(query.user, {}).items():
            scores[poi] = float(count)
        return scores

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"visits": self.visits}


class MFRecommender(Recommender):
    """Dot-product matrix factorization trained on implicit feedback with sampled POI negatives"""

    kind = "mf"

    def __init__(self, num_users: int, num_pois: int, dim: int):
        super().__init__(num_users, num_pois, dim)
        self._cache_key: Optional[int] = None
        self._tuples = None
        self._visited = None

    def score_all(self, params: SharedParams, query: Query) -> np.ndarray:
        return params.W_poi @ params.W_user[query.user]

    def _prepare(self, dataset: Dataset) -> None:
        if self._cache_key != id(dataset):
            self._tuples = build_train_tuples(dataset)
            self._visited = build_visited_poi_index(dataset)
            self._cache_key = id(dataset)

    def train_epoch(self, params, dataset, config, adam, rng) -> float:
        """
        Logistic loss on visited (user, POI) pairs against k unvisited POIs each

        Returns:
            Mean loss per positive pair
        """
        self._prepare(dataset)
        tuples = self._tuples
        if not tuples:
            return 0.0

        weights = params.as_dict()
        order = rng.permutation(len(tuples))
        total = 0.0
        for batch_no, start in enumerate(range(0, len(tuples), config.batch_size)):
            batch = [tuples[i] for i in order[start:start + config.batch_size].tolist()]
            users = np.array([t.user for t in batch], dtype=np.int64)
            pois = np.array([t.poi for t in batch], dtype=np.int64)
            neg_ids, valid = pad_negatives(
                [sample_negatives(self._visited, t.user, config.negatives, rng) for t in batch]
            )

            loss, d_user, d_poi, d_neg = negative_sampling_terms(
                params.W_user[users], params.W_poi[pois], params.W_poi[neg_ids], valid
            )
            batch_loss = float(loss.sum())
            if not np.isfinite(batch_loss):
                raise TrainingError(f"Non-finite MF loss in batch {batch_no}")

            adam_step(weights, {
                "W_user": RowGradients.accumulate(users, d_user),
                "W_poi": RowGradients.accumulate(
                    np.concatenate([pois, neg_ids[valid]]),
                    np.concatenate([d_poi, d_neg[valid]])
                ),
            }, adam)
            total += batch_loss
        return total / len(tuples)


class SeqRecommender(Recommender):
    """
    Factorized first-order transitions

    score(u, l) = W_user[u] . W_poi[l] + T[last] . W_poi[l], trained with full
    softmax cross entropy over all POIs on every train transition.
    """

    kind = "seqrec"
    sequential = True

    def __init__(self, num_users: int, num_pois: int, dim: int, rng: Optional[np.random.Generator] = None):
        super().__init__(num_users, num_pois, dim)
        self.T = init_embedding(num_pois, dim, rng) if rng is not None else np.zeros((num_pois, dim))
        self._cache_key: Optional[int] = None
        self._transitions: Optional[np.ndarray] = None

    def score_all(self, params: SharedParams, query: Query) -> np.ndarray:
        if len(query.history) == 0:
            raise ModelError("SEQREC needs a nonempty history")
        return params.W_poi @ (params.W_user[query.user] + self.T[query.history[-1]])

    def transitions(self, dataset: Dataset) -> np.ndarray:
        """(user, previous POI, next POI) rows from every train partition"""
        if self._cache_key != id(dataset):
            rows = []
            for user in range(dataset.num_users):
                pois = [c.poi for c in dataset.train_sequence(user)]
                rows.extend((user, prev, nxt) for prev, nxt in zip(pois, pois[1:]))
            self._transitions = np.array(rows, dtype=np.int64).reshape(-1, 3)
            self._cache_key = id(dataset)
        return self._transitions

    def batch_loss_and_grads(self, params: SharedParams, batch: np.ndarray):
        """
        Summed cross entropy of a batch of transitions

        Returns:
            (loss, grads) with RowGradients for W_user and T and a dense W_poi gradient
        """
        users, prevs, targets = batch[:, 0], batch[:, 1], batch[:, 2]
        hidden = params.W_user[users] + self.T[prevs]
        loss, d_logits = _softmax_cross_entropy(hidden @ params.W_poi.T, targets)
        d_hidden = d_logits @ params.W_poi
        grads = {
            "W_user": RowGradients.accumulate(users, d_hidden),
            "T": RowGradients.accumulate(prevs, d_hidden),
            "W_poi": d_logits.T @ hidden,
        }
        return float(loss.sum()), grads

    def train_epoch(self, params, dataset, config, adam, rng) -> float:
        transitions = self.transitions(dataset)
        if len(transitions) == 0:
            return 0.0

        weights = {**params.as_dict(), "T": self.T}
        order = rng.permutation(len(transitions))
        total = 0.0
        for batch_no, start in enumerate(range(0, len(transitions), config.batch_size)):
            loss, grads = self.batch_loss_and_grads(params, transitions[order[start:start + config.batch_size]])
            if not np.isfinite(loss):
                raise TrainingError(f"Non-finite SEQREC loss in batch {batch_no}")
            adam_step(weights, grads, adam)
            total += loss
        return total / len(transitions)

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"T": self.T}

    def load_parameters(self, arrays: Dict[str, np.ndarray]) -> None:
        self.T = np.asarray(arrays["T"], dtype=np.float64)


GRU_WEIGHTS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


@dataclass
class GRUTrace:
    """Per-step activations of a GRU run, rows indexed by time"""
    inputs: np.ndarray      # x_t
    previous: np.ndarray    # h_{t-1}
    update: np.ndarray      # z_t
    reset: np.ndarray       # r_t
    candidate: np.ndarray   # h~_t
    hidden: np.ndarray      # h_t


def gru_forward(weights: Dict[str, np.ndarray], inputs: np.ndarray) -> GRUTrace:
    """
    Run the gated recurrence from h_0 = 0

    z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r),
    h~ = tanh(W_h x + U_h (r * h) + b_h), h' = z * h + (1 - z) * h~

    Args:
        weights: Gate parameters
        inputs: (T, d) input rows

    Returns:
        GRUTrace with T steps
    """
    steps, dim = inputs.shape
    trace = GRUTrace(*(np.zeros((steps, dim)) for _ in range(6)))
    trace.inputs[:] = inputs
    h = np.zeros(dim)
    for t in range(steps):
        x = inputs[t]
        z = sigmoid(weights["W_z"] @ x + weights["U_z"] @ h + weights["b_z"])
        r = sigmoid(weights["W_r"] @ x + weights["U_r"] @ h + weights["b_r"])
        c = np.tanh(weights["W_h"] @ x + weights["U_h"] @ (r * h) + weights["b_h"])
        trace.previous[t], trace.update[t], trace.reset[t], trace.candidate[t] = h, z, r, c
        h = z * h + (1.0 - z) * c
        trace.hidden[t] = h
    return trace


def gru_backward(weights: Dict[str, np.ndarray], trace: GRUTrace, d_hidden: np.ndarray):
    """
    Backpropagation through time

    Args:
        weights: Gate parameters used in the forward pass
        trace: Forward activations
        d_hidden: (T, d) loss gradient arriving at each h_t from the outputs

    Returns:
        (gate gradients by name, (T, d) gradients of the inputs)
    """
    grads = {name: np.zeros_like(weights[name]) for name in GRU_WEIGHTS}
    d_inputs = np.zeros_like(trace.inputs)
    carry = np.zeros(trace.inputs.shape[1])

    for t in range(len(trace.inputs) - 1, -1, -1):
        x, h_prev = trace.inputs[t], trace.previous[t]
        z, r, c = trace.update[t], trace.reset[t], trace.candidate[t]
        dh = d_hidden[t] + carry

        d_cand = dh * (1.0 - z) * (1.0 - c * c)
        d_upd = dh * (h_prev - c) * z * (1.0 - z)
        d_gated = weights["U_h"].T @ d_cand
        d_rst = d_gated * h_prev * r * (1.0 - r)

        grads["W_h"] += np.outer(d_cand, x)
        grads["U_h"] += np.outer(d_cand, r * h_prev)
        grads["b_h"] += d_cand
        grads["W_z"] += np.outer(d_upd, x)
        grads["U_z"] += np.outer(d_upd, h_prev)
        grads["b_z"] += d_upd
        grads["W_r"] += np.outer(d_rst, x)
        grads["U_r"] += np.outer(d_rst, h_prev)
        grads["b_r"] += d_rst

        d_inputs[t] = weights["W_h"].T @ d_cand + weights["W_z"].T @ d_upd + weights["W_r"].T @ d_rst
        carry = (dh * z + d_gated * r
                 + weights["U_z"].T @ d_upd + weights["U_r"].T @ d_rst)
    return grads, d_inputs


class GRURecommender(Recommender):
    """
    GRU over the POI embeddings of the history

    score(u, l) = (h_last + W_user[u]) . W_poi[l]; trained with full softmax
    cross entropy on every next-POI step of each train sequence, gradients by
    full backpropagation through time.
    """

    kind = "gru"
    sequential = True

    def __init__(self, num_users: int, num_pois: int, dim: int, rng: Optional[np.random.Generator] = None):
        super().__init__(num_users, num_pois, dim)
        bound = 1.0 / np.sqrt(dim)
        self.weights: Dict[str, np.ndarray] = {}
        for name in GRU_WEIGHTS:
            shape = (dim,) if name.startswith("b_") else (dim, dim)
            if rng is None or name.startswith("b_"):
                self.weights[name] = np.zeros(shape)
            else:
                self.weights[name] = rng.uniform(-bound, bound, size=shape)

    def hidden_state(self, params: SharedParams, history: Sequence[int]) -> np.ndarray:
        return gru_forward(self.weights, params.W_poi[np.asarray(history, dtype=np.int64)]).hidden[-1]

    def score_all(self, params: SharedParams, query: Query) -> np.ndarray:
        if len(query.history) == 0:
            raise ModelError("GRU needs a nonempty history")
        return params.W_poi @ (self.hidden_state(params, query.history) + params.W_user[query.user])

    def sequence_loss_and_grads(self, params: SharedParams, user: int, pois: Sequence[int]):
        """
        Summed next-POI cross entropy along one sequence

        Step t reads pois[:t+1] and predicts pois[t+1].

        Returns:
            (loss, gate gradients, d W_user[user] (d,), dense d W_poi (Q, d))
        """
        pois = np.asarray(pois, dtype=np.int64)
        inputs, targets = pois[:-1], pois[1:]
        trace = gru_forward(self.weights, params.W_poi[inputs])
        output = trace.hidden + params.W_user[user]
        loss, d_logits = _softmax_cross_entropy(output @ params.W_poi.T, targets)

        d_output = d_logits @ params.W_poi
        d_poi = d_logits.T @ output
        gate_grads, d_inputs = gru_backward(self.weights, trace, d_output)
        np.add.at(d_poi, inputs, d_inputs)
        return float(loss.sum()), gate_grads, d_output.sum(axis=0), d_poi

    def train_epoch(self, params, dataset, config, adam, rng) -> float:
        users = [u for u in range(dataset.num_users) if dataset.split_points[u] >= 2]
        if not users:
            return 0.0

        weights = {**params.as_dict(), **self.weights}
        order = rng.permutation(len(users))
        total, steps = 0.0, 0
        for batch_no, start in enumerate(range(0, len(users), config.batch_size)):
            batch = [users[i] for i in order[start:start + config.batch_size].tolist()]
            gate_sum = {name: np.zeros_like(w) for name, w in self.weights.items()}
            poi_sum = np.zeros_like(params.W_poi)
            user_grads = []
            batch_loss = 0.0
            for user in batch:
                pois = [c.poi for c in dataset.train_sequence(user)]
                loss, gate_grads, d_user, d_poi = self.sequence_loss_and_grads(params, user, pois)
                batch_loss += loss
                steps += len(pois) - 1
                for name, g in gate_grads.items():
                    gate_sum[name] += g
                poi_sum += d_poi
                user_grads.append(d_user)

            if not np.isfinite(batch_loss):
                raise TrainingError(f"Non-finite GRU loss in batch {batch_no}")
            grads = {
                **gate_sum,
                "W_user": RowGradients.accumulate(np.array(batch, dtype=np.int64), np.array(user_grads)),
                "W_poi": poi_sum,
            }
            adam_step(weights, grads, adam)
            total += batch_loss
        return total / steps

    def parameters(self) -> Dict[str, np.ndarray]:
        return dict(self.weights)

    def load_parameters(self, arrays: Dict[str, np.ndarray]) -> None:
        self.weights = {name: np.asarray(arrays[name], dtype=np.float64) for name in GRU_WEIGHTS}


MODEL_CLASSES = {
    cls.kind: cls
    for cls in (TopRecommender, UserTopRecommender, MFRecommender, SeqRecommender, GRURecommender)
}


def create_model(kind: str, num_users: int, num_pois: int, dim: int,
                 rng: Optional[np.random.Generator] = None) -> Recommender:
    """
    Build a model of the given kind

    Args:
        kind: One of MODEL_CLASSES
        num_users: M
        num_pois: Q
        dim: Embedding dimension
        rng: Initializer for model-specific weights (zeros when None)
    """
    if kind not in MODEL_CLASSES:
        raise ModelError(f"Unknown model kind '{kind}'")
    cls = MODEL_CLASSES[kind]
    if cls in (SeqRecommender, GRURecommender):
        return cls(num_users, num_pois, dim, rng)
    return cls(num_users, num_pois, dim)
