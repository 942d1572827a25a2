import math

import numpy as np
import pytest

from n2rec.core.errors import TrainingError
from n2rec.core.gradcheck import check_jtll_gradients
from n2rec.core.jtll import JtllConfig, JtllMasks, jtll_epoch, jtll_grads, jtll_loss
from n2rec.core.models import SharedParams
from n2rec.core.optim import AdamState, finite_diff_check, sigmoid
from n2rec.core.sampling import TrainTuple, VisitorIndex, build_train_tuples, build_visitor_index


class TestLoss:

    def test_all_zero_rows(self):
        loss = jtll_loss(np.zeros(4), np.zeros(4), np.zeros((2, 4)))
        assert loss == pytest.approx(3.0 * math.log(2.0), abs=1e-12)

    def test_scalar_case(self):
        assert jtll_loss(np.array([1.0]), np.array([1.0]), []) == pytest.approx(0.313262, abs=1e-6)

    def test_confident_positive(self):
        loss = jtll_loss(np.array([10.0]), np.array([1.0]), [])
        assert loss > 0.0
        assert loss == pytest.approx(4.54e-5, rel=1e-3)

    def test_negative_order_does_not_matter(self):
        rng = np.random.default_rng(11)
        u, l = rng.normal(size=5), rng.normal(size=5)
        negs = rng.normal(size=(4, 5))
        expected = jtll_loss(u, l, negs)
        for _ in range(5):
            assert jtll_loss(u, l, negs[rng.permutation(4)]) == pytest.approx(expected, rel=1e-12)

    def test_negative_sum_is_additive(self):
        rng = np.random.default_rng(12)
        u, l = rng.normal(size=6), rng.normal(size=6)
        first, second = rng.normal(size=(2, 6)), rng.normal(size=(3, 6))
        positive_only = jtll_loss(u, l, [])
        combined = jtll_loss(u, l, np.vstack([first, second]))
        parts = jtll_loss(u, l, first) + jtll_loss(u, l, second) - positive_only
        assert combined == pytest.approx(parts, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            jtll_loss(np.zeros(3), np.zeros(4), [])
        with pytest.raises(ValueError):
            jtll_loss(np.zeros(3), np.zeros(3), np.zeros((2, 4)))


class TestGradients:

    def test_all_zero_rows(self):
        grads = jtll_grads(np.zeros(4), np.zeros(4), np.zeros((2, 4)))
        for g in (grads.user, grads.poi, grads.negatives):
            np.testing.assert_array_equal(g, 0.0)

    def test_scalar_case(self):
        grads = jtll_grads(np.array([1.0]), np.array([1.0]), [])
        assert grads.user[0] == pytest.approx(-0.268941, abs=1e-6)
        assert grads.negatives.shape == (0, 1)

    def test_random_instances(self):
        result = check_jtll_gradients(np.random.default_rng(0), instances=100)
        assert result.max_rel_err < 1e-5

    def test_masked_gradient_matches_masked_loss(self):
        rng = np.random.default_rng(4)
        u, l = rng.normal(scale=0.5, size=6), rng.normal(scale=0.5, size=6)
        n = rng.normal(scale=0.5, size=(3, 6))
        masks = JtllMasks(
            user=(rng.random(6) > 0.5) * 2.0,
            poi=(rng.random(6) > 0.5) * 2.0,
            negatives=(rng.random((3, 6)) > 0.5) * 2.0,
        )
        grads = jtll_grads(u, l, n, masks)
        assert finite_diff_check(lambda x: jtll_loss(x, l, n, masks), grads.user, u, h=1e-5) < 1e-5
        assert finite_diff_check(lambda x: jtll_loss(u, x, n, masks), grads.poi, l, h=1e-5) < 1e-5
        err = finite_diff_check(lambda x: jtll_loss(u, l, x.reshape(3, 6), masks), grads.negatives, n, h=1e-5)
        assert err < 1e-5


def _setup(dataset, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    params = SharedParams.initialize(dataset.num_users, dataset.num_pois, dim, rng)
    return params, build_train_tuples(dataset), build_visitor_index(dataset), rng


class TestEpoch:

    def test_empty_tuple_list(self, tiny_dataset):
        params, _, index, rng = _setup(tiny_dataset)
        before = params.copy()
        loss = jtll_epoch(params, [], index, JtllConfig(), AdamState(), rng)
        assert loss == 0.0
        np.testing.assert_array_equal(params.W_user, before.W_user)
        np.testing.assert_array_equal(params.W_poi, before.W_poi)

    def test_loss_decreases(self, make_random_dataset):
        dataset = make_random_dataset(np.random.default_rng(8))
        params, tuples, index, rng = _setup(dataset)
        config = JtllConfig(batch_size=16, negatives=3, dropout=0.0)
        adam = AdamState(lr=0.05)
        losses = [jtll_epoch(params, tuples, index, config, adam, rng) for _ in range(40)]
        assert losses[-1] < losses[0]

    def test_dropout_run_is_seeded(self, tiny_dataset):
        def run():
            params, tuples, index, rng = _setup(tiny_dataset)
            for _ in range(3):
                jtll_epoch(params, tuples, index, JtllConfig(batch_size=2), AdamState(), rng)
            return params

        a, b = run(), run()
        np.testing.assert_array_equal(a.W_user, b.W_user)
        np.testing.assert_array_equal(a.W_poi, b.W_poi)

    def test_fixed_negatives_reused(self, tiny_dataset):
        params, tuples, index, rng = _setup(tiny_dataset)
        fixed = {}
        config = JtllConfig(batch_size=3, negatives=2)
        jtll_epoch(params, tuples, index, config, AdamState(), rng, fixed)
        first = dict(fixed)
        assert len(first) == len(tuples)
        jtll_epoch(params, tuples, index, config, AdamState(), rng, fixed)
        assert fixed == first

    def test_non_finite_loss(self, tiny_dataset):
        params, tuples, index, rng = _setup(tiny_dataset)
        params.W_poi[:] = np.nan
        with pytest.raises(TrainingError, match="batch 0"):
            jtll_epoch(params, tuples, index, JtllConfig(dropout=0.0), AdamState(), rng)

    def test_toy_loss_settles(self):
        # 6 users, 4 POIs; k covers every never-visitor so only the shuffle varies
        pairs = [(0, 0), (1, 0), (2, 1), (3, 1), (4, 2), (5, 2), (0, 3), (2, 3), (4, 3), (1, 2)]
        tuples = [TrainTuple(u, p) for u, p in pairs]
        members = [[u for u, p in pairs if p == poi] for poi in range(4)]
        index = VisitorIndex([np.array(m) for m in members], universe=6)
        rng = np.random.default_rng(21)
        params = SharedParams.initialize(6, 4, 8, rng)
        config = JtllConfig(batch_size=4, negatives=5, dropout=0.0)
        adam = AdamState(lr=0.01)

        losses = [jtll_epoch(params, tuples, index, config, adam, rng) for _ in range(50)]
        for previous, current in zip(losses[4:], losses[5:]):
            assert current <= previous * 1.05
        assert losses[-1] < losses[4]


class TestDescent:

    def test_single_tuple_without_negatives(self):
        rng = np.random.default_rng(5)
        params = SharedParams(rng.normal(scale=0.3, size=(2, 4)), rng.normal(scale=0.3, size=(1, 4)))
        before = float(params.W_user[0] @ params.W_poi[0])
        index = VisitorIndex([np.array([0])], universe=2)
        jtll_epoch(params, [TrainTuple(0, 0)], index, JtllConfig(negatives=0, dropout=0.0),
                   AdamState(lr=1e-3), rng)
        assert float(params.W_user[0] @ params.W_poi[0]) > before

    @pytest.mark.parametrize("seed", range(20))
    def test_small_step_moves_scores_apart(self, seed):
        # positive user and negatives on opposite orthants keep the cross terms signed
        rng = np.random.default_rng(seed)
        u = -np.abs(rng.normal(scale=0.5, size=6))
        l = rng.normal(scale=0.5, size=6)
        negs = np.abs(rng.normal(scale=0.5, size=(3, 6)))
        grads = jtll_grads(u, l, negs)
        lr = 1e-4
        u2, l2, negs2 = u - lr * grads.user, l - lr * grads.poi, negs - lr * grads.negatives

        assert sigmoid(u2 @ l2) >= sigmoid(u @ l)
        assert np.all(sigmoid(negs2 @ l2) <= sigmoid(negs @ l))
        assert u2 @ l2 > u @ l
        assert np.all(negs2 @ l2 < negs @ l)
