"""Numerical primitives shared by JTLL and the base models"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple, Union

import numpy as np

from .errors import OptimizationError


def sigmoid(x):
    """
    Logistic function, stable for large |x|

    Never overflows or produces NaN. Below about x = -745 the true value is
    smaller than the least subnormal double, so the result is exactly 0.0
    (sigmoid(-1000) == 0.0); use log_sigmoid where the tail matters.

    Args:
        x: Scalar or array

    Returns:
        Same shape as x (float for scalar input)
    """
    x = np.asarray(x, dtype=np.float64)
    # exp(-|x|) never overflows; branch on sign
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow"""
    out = -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def init_embedding(rows: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Embedding matrix drawn uniformly from (-1/(2d), 1/(2d))"""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    bound = 1.0 / (2.0 * dim)
    return rng.uniform(-bound, bound, size=(rows, dim))


@dataclass
class RowGradients:
    """Gradient restricted to a set of matrix rows"""
    rows: np.ndarray    # unique row ids, ascending
    values: np.ndarray  # (len(rows), dim)

    @classmethod
    def accumulate(cls, rows: np.ndarray, values: np.ndarray) -> "RowGradients":
        """
        Sum gradients of repeated rows

        Args:
            rows: Row id per gradient row (may repeat)
            values: (len(rows), dim) gradients
        """
        rows = np.asarray(rows, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        unique, inverse = np.unique(rows, return_inverse=True)
        summed = np.zeros((len(unique),) + values.shape[1:])
        np.add.at(summed, inverse.reshape(-1), values)
        return cls(unique, summed)


Gradient = Union[np.ndarray, RowGradients]


@dataclass
class AdamState:
    """Adam hyperparameters, moment accumulators and step counter"""
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def _check_finite(name: str, grad: Gradient) -> None:
    values = grad.values if isinstance(grad, RowGradients) else grad
    finite = np.isfinite(values)
    if finite.all():
        return
    bad = np.argwhere(~finite)[0]
    if isinstance(grad, RowGradients):
        row = int(grad.rows[bad[0]])
    else:
        row = int(bad[0]) if values.ndim > 1 else None
    location = f"row {row}" if row is not None else f"entry {tuple(int(i) for i in bad)}"
    raise OptimizationError(f"Non-finite gradient for {name} at {location}")


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, Gradient], state: AdamState) -> None:
    """
    One bias-corrected Adam update, in place

    Dense gradients update the whole parameter. RowGradients update only the
    listed rows (and only their moments). The step counter advances once.

    Args:
        params: Parameter arrays by name
        grads: Gradients by name (subset of params)
        state: Optimizer state, mutated

    Raises:
        OptimizationError: if any gradient is non-finite (nothing is updated)
    """
    for name, grad in grads.items():
        _check_finite(name, grad)

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    step_size = state.lr / bc1

    for name, grad in grads.items():
        param = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]

        if isinstance(grad, RowGradients):
            rows, g = grad.rows, grad.values
            m_rows = state.beta1 * m[rows] + (1.0 - state.beta1) * g
            v_rows = state.beta2 * v[rows] + (1.0 - state.beta2) * (g * g)
            m[rows] = m_rows
            v[rows] = v_rows
            param[rows] -= step_size * m_rows / (np.sqrt(v_rows / bc2) + state.eps)
        else:
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * (grad * grad)
            param -= step_size * m / (np.sqrt(v / bc2) + state.eps)


@dataclass(frozen=True)
class DropoutSpec:
    """Inverted dropout settings"""
    p: float = 0.0
    training: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"Dropout probability must be in [0, 1), got {self.p}")

    @property
    def active(self) -> bool:
        return self.training and self.p > 0.0


def apply_dropout(values: np.ndarray, spec: DropoutSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Zero each coordinate with probability p and scale survivors by 1/(1-p)

    Args:
        values: Row or stacked rows
        spec: Dropout settings
        rng: Generator (untouched when dropout is inactive)

    Returns:
        (dropped values, mask) where mask holds 0 or 1/(1-p)
    """
    values = np.asarray(values, dtype=np.float64)
    if not spec.active:
        return values.copy(), np.ones_like(values)
    mask = (rng.random(values.shape) >= spec.p) / (1.0 - spec.p)
    return values * mask, mask


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    analytic_grad: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]],
    point: np.ndarray,
    h: float = 1e-4
) -> float:
    """
    Compare an analytic gradient with central differences

    Args:
        f: Scalar function of a parameter array
        analytic_grad: Gradient at point, or a function returning it
        point: Where to check (not modified)
        h: Step size

    Returns:
        Max over coordinates of |a - n| / (|a| + |n| + 1e-12)
    """
    point = np.array(point, dtype=np.float64)
    if callable(analytic_grad):
        analytic_grad = analytic_grad(point)
    analytic = np.asarray(analytic_grad, dtype=np.float64).reshape(point.shape)

    worst = 0.0
    shifted = point.copy()
    for idx in np.ndindex(point.shape):
        original = shifted[idx]
        shifted[idx] = original + h
        f_plus = f(shifted)
        shifted[idx] = original - h
        f_minus = f(shifted)
        shifted[idx] = original

        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic[idx]
        worst = max(worst, abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12))
    return worst


def negative_sampling_terms(
    anchor: np.ndarray,
    positive: np.ndarray,
    negatives: np.ndarray,
    valid: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Batched -log s(a.p) - sum_n log s(-a.n) with its gradients

    Args:
        anchor: (B, d)
        positive: (B, d)
        negatives: (B, K, d), padded
        valid: (B, K) boolean, False on padding

    Returns:
        (loss per item (B,), d_anchor (B, d), d_positive (B, d), d_negatives (B, K, d));
        padded negatives get zero gradient
    """
    weight = valid.astype(np.float64)
    pos_score = np.einsum('bd,bd->b', anchor, positive)
    neg_score = np.einsum('bkd,bd->bk', negatives, anchor)

    loss = -log_sigmoid(pos_score) - np.sum(weight * log_sigmoid(-neg_score), axis=1)

    pos_coef = sigmoid(-pos_score)           # 1 - s(a.p)
    neg_coef = sigmoid(neg_score) * weight   # s(a.n)
    d_anchor = -pos_coef[:, None] * positive + np.einsum('bk,bkd->bd', neg_coef, negatives)
    d_positive = -pos_coef[:, None] * anchor
    d_negatives = neg_coef[:, :, None] * anchor[:, None, :]
    return np.atleast_1d(loss), d_anchor, d_positive, d_negatives


def pad_negatives(negative_lists, width: int = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pack ragged negative id lists into a padded (B, K) id array and validity mask

    Args:
        negative_lists: One list of ids per batch item
        width: K, defaults to the longest list

    Returns:
        (ids, valid)
    """
    if width is None:
        width = max((len(n) for n in negative_lists), default=0)
    ids = np.zeros((len(negative_lists), width), dtype=np.int64)
    valid = np.zeros((len(negative_lists), width), dtype=bool)
    for i, negs in enumerate(negative_lists):
        ids[i, :len(negs)] = negs
        valid[i, :len(negs)] = True
    return ids, valid
