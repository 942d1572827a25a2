from dataclasses import replace

import numpy as np
import pytest

from n2rec.config.settings import JointConfig
from n2rec.core.evaluation import evaluate
from n2rec.core.ingest import split
from n2rec.core.joint import JointTrainer, derive_streams, format_epoch_log, joint_train, write_epoch_log
from n2rec.core.models import SharedParams, create_model
from n2rec.core.optim import AdamState
from n2rec.core.synth import SynthConfig, generate


def assert_same_state(a, b):
    np.testing.assert_array_equal(a.params.W_user, b.params.W_user)
    np.testing.assert_array_equal(a.params.W_poi, b.params.W_poi)
    for name, value in a.model.parameters().items():
        np.testing.assert_array_equal(value, b.model.parameters()[name])


class TestStreams:

    def test_same_seed_same_draws(self):
        a, b = derive_streams(5), derive_streams(5)
        assert a.jtll.random() == b.jtll.random()
        assert a.base.integers(1 << 30) == b.base.integers(1 << 30)

    def test_streams_differ(self):
        streams = derive_streams(5)
        assert streams.init.random() != streams.jtll.random()


class TestJointTraining:

    def test_zero_epochs_keeps_initialization(self, tiny_dataset):
        config = JointConfig(model="gru", dim=4, epochs=0, seed=9)
        result = joint_train(tiny_dataset, config)

        init = derive_streams(9).init
        expected = SharedParams.initialize(tiny_dataset.num_users, tiny_dataset.num_pois, 4, init)
        np.testing.assert_array_equal(result.params.W_user, expected.W_user)
        np.testing.assert_array_equal(result.params.W_poi, expected.W_poi)
        assert result.log == []

    @pytest.mark.parametrize("kind", ["mf", "seqrec", "gru"])
    def test_jtll_off_is_base_training_alone(self, tiny_dataset, kind):
        config = JointConfig(model=kind, dim=4, epochs=3, batch_size=2, jtll_enabled=False, seed=4)
        result = joint_train(tiny_dataset, config)

        streams = derive_streams(4)
        params = SharedParams.initialize(tiny_dataset.num_users, tiny_dataset.num_pois, 4, streams.init)
        model = create_model(kind, tiny_dataset.num_users, tiny_dataset.num_pois, 4, streams.init)
        adam = AdamState(lr=config.lr)
        for _ in range(config.epochs):
            model.train_epoch(params, tiny_dataset, config, adam, streams.base)

        np.testing.assert_array_equal(result.params.W_user, params.W_user)
        np.testing.assert_array_equal(result.params.W_poi, params.W_poi)
        for name, value in model.parameters().items():
            np.testing.assert_array_equal(result.model.parameters()[name], value)

    def test_deterministic(self, tiny_dataset):
        config = JointConfig(model="seqrec", dim=4, epochs=2, batch_size=2, seed=1)
        assert_same_state(joint_train(tiny_dataset, config), joint_train(tiny_dataset, config))

    def test_seed_changes_result(self, tiny_dataset):
        a = joint_train(tiny_dataset, JointConfig(model="mf", dim=4, epochs=1, seed=1))
        b = joint_train(tiny_dataset, JointConfig(model="mf", dim=4, epochs=1, seed=2))
        assert not np.array_equal(a.params.W_user, b.params.W_user)

    def test_jtll_moves_embeddings_without_base_updates(self, tiny_dataset):
        # base_lr = 0 freezes the base pass, so any change comes from JTLL
        frozen = JointConfig(model="gru", dim=4, epochs=2, batch_size=2, base_lr=0.0, seed=3)
        result = joint_train(tiny_dataset, frozen)
        initial = joint_train(tiny_dataset, JointConfig(model="gru", dim=4, epochs=0, seed=3))
        assert not np.array_equal(result.params.W_poi, initial.params.W_poi)

        off = joint_train(tiny_dataset, JointConfig(
            model="gru", dim=4, epochs=2, batch_size=2, base_lr=0.0, jtll_enabled=False, seed=3
        ))
        np.testing.assert_array_equal(off.params.W_poi, initial.params.W_poi)

    def test_jtll_alone_changes_the_evaluation(self):
        dataset = split(generate(SynthConfig(num_users=40, num_pois=20, num_groups=4, min_length=6, max_length=10)))
        frozen = JointConfig(model="mf", dim=8, epochs=5, base_lr=0.0, jtll_lr=0.01, seed=2)
        with_jtll = joint_train(dataset, frozen)
        without = joint_train(dataset, replace(frozen, jtll_enabled=False))
        a = evaluate(with_jtll.model, with_jtll.params, dataset)
        b = evaluate(without.model, without.params, dataset)
        assert a.num_samples == b.num_samples
        assert a != b

    def test_count_model_with_jtll(self, tiny_dataset):
        result = joint_train(tiny_dataset, JointConfig(model="top", dim=4, epochs=2))
        assert [e.model_loss for e in result.log] == [0.0, 0.0]
        assert all(e.jtll_loss > 0.0 for e in result.log)
        assert result.model.frequency.sum() == 8

    def test_fixed_negatives_are_cached(self, tiny_dataset):
        trainer = JointTrainer(tiny_dataset, JointConfig(model="mf", dim=4, epochs=1, fixed_negatives=True))
        trainer.run()
        assert len(trainer.fixed_negatives) == len(trainer.tuples)

    def test_multiplicity_tuples(self, tiny_dataset):
        trainer = JointTrainer(tiny_dataset, JointConfig(model="mf", dim=4, tuple_multiplicity=True))
        assert len(trainer.tuples) == 8


class TestEpochLog:

    def test_format(self, tiny_dataset):
        on = joint_train(tiny_dataset, JointConfig(model="mf", dim=4, epochs=2))
        off = joint_train(tiny_dataset, JointConfig(model="mf", dim=4, epochs=1, jtll_enabled=False))

        lines = format_epoch_log(on.log).splitlines()
        assert lines[0] == "epoch\tjtll_loss\tmodel_loss"
        assert [line.split("\t")[0] for line in lines[1:]] == ["1", "2"]
        assert format_epoch_log(off.log).splitlines()[1].split("\t")[1] == "nan"

    def test_write(self, tiny_dataset, tmp_path):
        result = joint_train(tiny_dataset, JointConfig(model="mf", dim=4, epochs=1))
        path = tmp_path / "epochs.tsv"
        write_epoch_log(result.log, path)
        assert path.read_text() == format_epoch_log(result.log)
