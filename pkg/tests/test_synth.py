import numpy as np
import pytest

from n2rec.config.settings import JointConfig
from n2rec.core.errors import ConfigError
from n2rec.core.synth import SynthConfig, generate, poi_group, run_uplift, user_group

# chi-square critical value, 9 degrees of freedom, alpha = 0.001
CHI2_CRITICAL_DF9 = 27.877


def group_pairs(dataset, groups):
    return [
        (user_group(dataset.user_keys[c.user], groups), poi_group(dataset.poi_keys[c.poi], groups))
        for seq in dataset.sequences
        for c in seq
    ]


class TestGenerate:

    def test_no_noise_stays_in_group(self):
        config = SynthConfig(num_users=60, num_pois=40, num_groups=5, epsilon=0.0, min_length=5, max_length=10)
        pairs = group_pairs(generate(config), 5)
        assert pairs and all(u == p for u, p in pairs)

    def test_full_noise_is_independent(self):
        config = SynthConfig(num_users=400, num_pois=200, num_groups=4, epsilon=1.0,
                             min_length=25, max_length=25, seed=1)
        pairs = np.array(group_pairs(generate(config), 4))
        assert len(pairs) == 10_000

        table = np.zeros((4, 4))
        np.add.at(table, (pairs[:, 0], pairs[:, 1]), 1)
        expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
        statistic = ((table - expected) ** 2 / expected).sum()
        assert statistic < CHI2_CRITICAL_DF9

    def test_deterministic(self):
        config = SynthConfig(num_users=30, num_pois=20, num_groups=3, seed=7)
        assert generate(config) == generate(config)

    def test_sequence_lengths(self):
        config = SynthConfig(num_users=50, num_pois=30, num_groups=5, min_length=3, max_length=6)
        dataset = generate(config)
        assert dataset.num_users == 50
        assert all(3 <= len(seq) <= 6 for seq in dataset.sequences)
        dataset.validate()

    def test_chronological(self):
        dataset = generate(SynthConfig(num_users=10, num_pois=20, num_groups=2))
        for seq in dataset.sequences:
            stamps = [c.timestamp for c in seq]
            assert stamps == sorted(stamps)

    @pytest.mark.parametrize("overrides", [
        {"epsilon": 1.5},
        {"num_groups": 1},
        {"min_length": 1},
        {"min_length": 10, "max_length": 5},
        {"num_pois": 3, "num_groups": 4},
    ])
    def test_invalid_config(self, overrides):
        with pytest.raises(ConfigError):
            generate(SynthConfig(**overrides))


def test_uplift_bookkeeping():
    synth = SynthConfig(num_users=20, num_pois=12, num_groups=3, min_length=4, max_length=6)
    result = run_uplift(synth, JointConfig(model="seqrec", dim=4, epochs=1), seeds=[0, 1])
    assert result.seeds == [0, 1]
    assert len(result.with_jtll) == len(result.without_jtll) == 2
    assert result.mean_uplift == pytest.approx(np.mean(result.uplifts))
    assert 0 <= result.wins <= 2



def test_jtll_uplift_on_planted_groups():
    # base pass kept slow so the base model alone stays short of the in-group ceiling
    joint = JointConfig(model="seqrec", dim=32, epochs=20, negatives=5, dropout=0.0, base_lr=1e-5)
    result = run_uplift(SynthConfig(500, 200, 10, 0.2), joint, seeds=range(5))
    assert result.wins >= 4
    assert result.mean_uplift > 0.0
