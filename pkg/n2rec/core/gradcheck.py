"""Finite-difference checks of the triplet loss and GRU gradients"""

from dataclasses import dataclass

import numpy as np

from .jtll import jtll_grads, jtll_loss
from .models import GRU_WEIGHTS, GRURecommender, SharedParams
from .optim import finite_diff_check

JTLL_TOLERANCE = 1e-5
JTLL_STEP = 1e-5
GRU_TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    """Worst relative error of a suite"""
    name: str
    max_rel_err: float
    checks: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def check_jtll_gradients(rng: np.random.Generator, instances: int = 100) -> GradCheckResult:
    """
    Compare jtll_grads with central differences on random instances

    Dimensions cycle through {2, 8, 32}; 0 to 8 negatives each. Rows are
    scaled by d^(-1/4) so dot products stay near unit variance.
    """
    worst = 0.0
    for i in range(instances):
        dim = (2, 8, 32)[i % 3]
        n_neg = int(rng.integers(0, 9))
        scale = dim ** -0.25
        u_h, l_b = rng.normal(scale=scale, size=dim), rng.normal(scale=scale, size=dim)
        negs = rng.normal(scale=scale, size=(n_neg, dim))
        grads = jtll_grads(u_h, l_b, negs)

        worst = max(worst, finite_diff_check(lambda x: jtll_loss(x, l_b, negs), grads.user, u_h, h=JTLL_STEP))
        worst = max(worst, finite_diff_check(lambda x: jtll_loss(u_h, x, negs), grads.poi, l_b, h=JTLL_STEP))
        if n_neg:
            worst = max(worst, finite_diff_check(
                lambda x: jtll_loss(u_h, l_b, x.reshape(n_neg, dim)), grads.negatives, negs, h=JTLL_STEP
            ))
    return GradCheckResult("jtll", worst, instances, JTLL_TOLERANCE)


def check_gru_gradients(rng: np.random.Generator, dim: int = 4, num_pois: int = 5,
                        length: int = 3) -> GradCheckResult:
    """
    Compare GRU backpropagation through time with central differences

    Covers every gate weight and bias, the user row and the whole POI matrix
    (input and output roles) on one random sequence.
    """
    model = GRURecommender(num_users=2, num_pois=num_pois, dim=dim, rng=rng)
    for name in GRU_WEIGHTS:
        model.weights[name] = rng.normal(scale=0.5, size=model.weights[name].shape)
    params = SharedParams(rng.normal(scale=0.5, size=(2, dim)), rng.normal(scale=0.5, size=(num_pois, dim)))
    user = 1
    pois = rng.integers(0, num_pois, size=length + 1).tolist()

    _, gate_grads, d_user, d_poi = model.sequence_loss_and_grads(params, user, pois)

    def loss_with(target: np.ndarray, replacement: np.ndarray) -> float:
        saved = target.copy()
        target[...] = replacement
        try:
            return model.sequence_loss_and_grads(params, user, pois)[0]
        finally:
            target[...] = saved

    worst = 0.0
    for name in GRU_WEIGHTS:
        weight = model.weights[name]
        worst = max(worst, finite_diff_check(lambda x: loss_with(weight, x), gate_grads[name], weight))
    user_row = params.W_user[user]
    worst = max(worst, finite_diff_check(lambda x: loss_with(user_row, x), d_user, user_row))
    worst = max(worst, finite_diff_check(lambda x: loss_with(params.W_poi, x), d_poi, params.W_poi))
    return GradCheckResult("gru", worst, len(GRU_WEIGHTS) + 2, GRU_TOLERANCE)
