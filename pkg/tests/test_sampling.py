import numpy as np
import pytest

from n2rec.core.sampling import (
    TrainTuple,
    VisitorIndex,
    build_train_tuples,
    build_visited_poi_index,
    build_visitor_index,
    sample_negatives,
)


class TestTrainTuples:

    def test_repeat_visits_collapse(self, make_dataset):
        # split 0.8 of 4 check-ins keeps [l1, l1, l2] for training
        dataset = make_dataset({"A": ["l1", "l1", "l2", "l3"], "B": ["l3", "l3"]})
        tuples = build_train_tuples(dataset)
        assert [t for t in tuples if t.user == 0] == [TrainTuple(0, 0), TrainTuple(0, 1)]

    def test_disjoint_users(self, make_dataset):
        dataset = make_dataset({"A": ["l1", "l1"], "B": ["l2", "l2"]})
        assert build_train_tuples(dataset) == [TrainTuple(0, 0), TrainTuple(1, 1)]

    def test_multiplicity(self, make_dataset):
        dataset = make_dataset({"A": ["l1", "l1", "l2", "l3"], "B": ["l3", "l3"]})
        tuples = build_train_tuples(dataset, multiplicity=True)
        assert [t for t in tuples if t.user == 0] == [TrainTuple(0, 0), TrainTuple(0, 0), TrainTuple(0, 1)]

    def test_matches_train_matrix(self, make_random_dataset):
        dataset = make_random_dataset(np.random.default_rng(11))
        matrix = np.zeros((dataset.num_users, dataset.num_pois), dtype=bool)
        for user in range(dataset.num_users):
            for c in dataset.train_sequence(user):
                matrix[user, c.poi] = True
        assert len(build_train_tuples(dataset)) == int(matrix.sum())


class TestVisitorIndex:

    def test_single_visitor(self, make_dataset):
        dataset = make_dataset({"A": ["l1", "l1"], "B": ["l2", "l2"], "C": ["l2", "l2"]})
        index = build_visitor_index(dataset)
        assert index.visitors(0).tolist() == [0]
        assert index.complement_size(0) == dataset.num_users - 1

    def test_visited_by_everyone(self, make_dataset):
        dataset = make_dataset({"A": ["l1", "l1"], "B": ["l1", "l1"]})
        assert build_visitor_index(dataset).complement_size(0) == 0

    def test_brute_force(self, make_random_dataset):
        dataset = make_random_dataset(np.random.default_rng(5))
        index = build_visitor_index(dataset)
        for poi in range(dataset.num_pois):
            expected = sorted({
                c.user for user in range(dataset.num_users)
                for c in dataset.train_sequence(user) if c.poi == poi
            })
            assert index.visitors(poi).tolist() == expected

    def test_transposed(self, tiny_dataset):
        index = build_visited_poi_index(tiny_dataset)
        assert len(index) == tiny_dataset.num_users
        assert index.visitors(2).tolist() == [3, 4, 5]
        assert index.universe == tiny_dataset.num_pois

    def test_out_of_range_member(self):
        with pytest.raises(ValueError):
            VisitorIndex([np.array([0, 3])], universe=3)


class TestSampleNegatives:

    def test_zero_requested(self):
        index = VisitorIndex([np.array([0])], universe=10)
        assert sample_negatives(index, 0, 0, np.random.default_rng(0)) == []

    def test_everyone_visited(self):
        index = VisitorIndex([np.arange(6)], universe=6)
        assert sample_negatives(index, 0, 5, np.random.default_rng(0)) == []

    def test_fewer_available_than_requested(self):
        index = VisitorIndex([np.array([0, 1, 2])], universe=5)
        assert sorted(sample_negatives(index, 0, 5, np.random.default_rng(0))) == [3, 4]

    @pytest.mark.parametrize("visitors", [np.array([1, 4, 7]), np.arange(2, 40)])
    def test_never_visitors_without_repeats(self, visitors):
        # the second case excludes most of the universe and samples the complement
        index = VisitorIndex([visitors], universe=50)
        rng = np.random.default_rng(3)
        for _ in range(50):
            drawn = sample_negatives(index, 0, 5, rng)
            assert len(drawn) == 5 == len(set(drawn))
            assert not any(index.contains(0, d) for d in drawn)
            assert all(0 <= d < 50 for d in drawn)

    def test_uniform_over_complement(self):
        index = VisitorIndex([np.array([0, 1])], universe=6)
        rng = np.random.default_rng(9)
        counts = np.zeros(6)
        for _ in range(4000):
            counts[sample_negatives(index, 0, 1, rng)] += 1
        assert counts[:2].sum() == 0
        np.testing.assert_allclose(counts[2:] / 4000, 0.25, atol=0.03)

    def test_seeded(self):
        index = VisitorIndex([np.array([1, 2])], universe=100)
        a = sample_negatives(index, 0, 5, np.random.default_rng(42))
        b = sample_negatives(index, 0, 5, np.random.default_rng(42))
        assert a == b

    def test_negative_k(self):
        index = VisitorIndex([np.array([1])], universe=4)
        with pytest.raises(ValueError):
            sample_negatives(index, 0, -1, np.random.default_rng(0))
