import pytest

from curriculum_teacher.config import (ExperimentConfig, apply_overrides, config_hash, dump_config,
                                       load_config, parse_text, to_flat)
from curriculum_teacher.exceptions import ConfigurationError


def test_defaults_mirror_reference_hyperparameters():
    cfg = ExperimentConfig()
    assert (cfg.ddpg.gamma, cfg.ddpg.tau, cfg.ddpg.update_frequency) == (0.95, 0.005, 20)
    assert (cfg.ddpg.replay_batch, cfg.ddpg.buffer_capacity) == (10, 1_000_000)
    assert (cfg.ddpg.hidden_layers, cfg.ddpg.hidden_nodes, cfg.ddpg.dropout) == (3, 50, 0.2)
    assert (cfg.dqn.epsilon_end, cfg.dqn.target_period) == (0.05, 10)
    assert (cfg.student.hidden_layers, cfg.student.hidden_nodes) == (2, 50)
    assert (cfg.data.train_fraction, cfg.data.validation_fraction) == (0.6, 0.2)
    assert cfg.curriculum.n_batches == 100


def test_parse_and_override(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nddpg.gamma = 0.9  # trailing\n\nexperiment.kind = constrain\n"
                    "data.balance_train = no\nseeds.global = 7\n")
    cfg = load_config(path, {"experiment.iterations": "12", "output": "runs/x"})
    assert cfg.ddpg.gamma == 0.9
    assert cfg.experiment.kind == "constrain" and cfg.experiment.iterations == 12
    assert cfg.data.balance_train is False
    assert cfg.seeds.global_ == 7 and cfg.output == "runs/x"


@pytest.mark.parametrize("pairs", [{"ddpg.nope": "1"}, {"nosection.x": "1"}, {"gamma": "1"},
                                   {"data.balance_train": "maybe"}, {"experiment.kind": "fly"},
                                   {"teacher.kind": "ppo"}])
def test_bad_keys_and_values_rejected(pairs):
    with pytest.raises(ConfigurationError):
        load_config(overrides=pairs)


def test_parse_text_requires_equals():
    with pytest.raises(ConfigurationError, match="line 2"):
        parse_text("a.b = 1\njunk\n")


def test_dump_round_trip():
    cfg = load_config(overrides={"ddpg.tau": "0.01", "curriculum.mode": "cumulative"})
    assert apply_overrides(ExperimentConfig(), parse_text(dump_config(cfg))) == cfg


@pytest.mark.parametrize("key", sorted(to_flat(ExperimentConfig())))
def test_hash_changes_iff_a_field_changes(key):
    base = ExperimentConfig()
    value = to_flat(base)[key]
    if isinstance(value, bool):
        new = str(not value)
    elif isinstance(value, int):
        new = str(value - 1 if value > 1 else value + 1)
    elif isinstance(value, float):
        new = repr(value * 0.999 if value else 1e-3)
    else:
        new = value + "x"
    changed = apply_overrides(base, {key: new})
    assert config_hash(changed) != config_hash(base)
    assert config_hash(apply_overrides(base, {key: str(value)})) == config_hash(base)


def test_derived_seeds_are_distinct_and_stable():
    seeds = ExperimentConfig().seeds
    derived = [seeds.resolve(n) for n in ("student", "teacher", "data")]
    assert len(set(derived)) == 3
    assert derived == [seeds.resolve(n) for n in ("student", "teacher", "data")]
    pinned = apply_overrides(ExperimentConfig(), {"seeds.student": "5"}).seeds
    assert pinned.resolve("student") == 5
