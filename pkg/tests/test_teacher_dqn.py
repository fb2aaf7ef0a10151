import json

import numpy as np
import pytest

from curriculum_teacher.curriculum import make_plan
from curriculum_teacher.exceptions import ConfigurationError, DimensionError
from curriculum_teacher.losses import huber
from curriculum_teacher.nncore import DenseNet, DenseNetSpec, SgdMomentum, relative_error
from curriculum_teacher.replay import Transition
from curriculum_teacher.student import StudentConfig
from curriculum_teacher.teacher_ddpg import checkpoint_hash, make_session
from curriculum_teacher.teacher_dqn import (DqnConfig, DqnTeacher, dqn_update, epsilon_at,
                                            greedy_actions, run_episode_dqn, select_batch,
                                            target_sync, td_loss_grad, teacher_from_dict,
                                            teacher_to_dict, train_teacher_dqn)

SCFG = StudentConfig(hidden_nodes=10, learning_rate=0.05)


def small_teacher(n_actions=8, **kw):
    return DqnTeacher.create(SCFG.state_dim, DqnConfig(n_actions=n_actions, hidden_nodes=16, **kw))


def test_epsilon_endpoints_and_linearity():
    cfg = DqnConfig(epsilon_start=1.0, epsilon_end=0.05)
    assert epsilon_at(0, 100, cfg) == 1.0
    assert epsilon_at(100, 100, cfg) == 0.05
    assert epsilon_at(50, 100, cfg) == pytest.approx(0.525)
    with pytest.raises(ConfigurationError):
        epsilon_at(101, 100, cfg)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DqnConfig(epsilon_start=0.1, epsilon_end=0.5)
    with pytest.raises(ConfigurationError):
        DqnConfig(target_period=0)


def test_select_batch_greedy_and_uniform():
    teacher = small_teacher()
    state = np.random.default_rng(0).random(SCFG.state_dim)
    rng = np.random.default_rng(1)
    best = int(np.argmax(teacher.qnet.predict(state)[0]))
    assert all(select_batch(teacher.qnet, state, 0.0, rng) == best for _ in range(20))
    draws = [select_batch(teacher.qnet, state, 1.0, rng) for _ in range(4000)]
    assert np.bincount(draws, minlength=8).min() > 400
    with pytest.raises(DimensionError):
        select_batch(teacher.qnet, np.zeros(3), 0.0, rng)


@pytest.mark.parametrize("clip", [0.0, 0.1])
def test_td_gradient_matches_finite_differences(clip):
    rng = np.random.default_rng(2)
    qnet = DenseNet.initialize(DenseNetSpec((4, 6, 3), "linear"), rng)
    target = DenseNet.initialize(DenseNetSpec((4, 6, 3), "linear"), rng)
    batch = [Transition(rng.standard_normal(4), a, r, rng.standard_normal(4))
             for a, r in ((0, 1.0), (2, -0.5), (2, 0.3))]
    loss, grads, out_grad = td_loss_grad(qnet, target, batch, 0.9, clip=clip)

    def objective(net):
        y = np.array([b.reward + 0.9 * target.predict(b.next_state).max() for b in batch])
        q = np.array([net.predict(b.state)[0, b.action] for b in batch])
        return float(np.mean(huber(q - y, clip)))

    assert loss == pytest.approx(objective(qnet))
    numeric = []
    eps = 1e-6
    for p in qnet.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up = objective(qnet)
            p[idx] = orig - eps
            down = objective(qnet)
            p[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        numeric.append(g)
    assert relative_error(np.concatenate([a.ravel() for a in grads.weights + grads.biases]),
                          np.concatenate([a.ravel() for a in numeric])) < 1e-5
    # untaken heads receive no gradient
    np.testing.assert_array_equal(out_grad[:, 1], 0.0)


def test_dqn_update_and_target_sync():
    rng = np.random.default_rng(3)
    qnet = DenseNet.initialize(DenseNetSpec((4, 6, 3), "linear"), rng)
    target = qnet.copy()
    batch = [Transition(rng.standard_normal(4), 1, 1.0, rng.standard_normal(4))]
    opt = SgdMomentum.for_net(qnet, 0.05)
    first = dqn_update(qnet, target, batch, 0.5, opt)
    assert dqn_update(qnet, target, batch, 0.5, opt) < first
    assert any(not np.array_equal(a, b) for a, b in zip(qnet.parameters(), target.parameters()))
    target_sync(qnet, target)
    for a, b in zip(qnet.parameters(), target.parameters()):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ConfigurationError):
        dqn_update(qnet, target, [], 0.5, opt)


def test_episode_records_and_first_action_uniform(small_splits):
    teacher = small_teacher()
    plan = make_plan(np.random.default_rng(0).random(small_splits.train.n), 8)
    log = run_episode_dqn(teacher, make_session(SCFG, small_splits, 0), plan, 30)
    assert len(log.records) == 30
    assert log.records[0]["epsilon"] == 1.0
    assert log.records[-1]["epsilon"] == pytest.approx(1.0 - 0.95 * 29 / 30)
    assert all(r["width"] == plan.batch(r["action_id"]).size for r in log.records)
    assert teacher.env_steps == 30 and teacher.episode_position == 30


def test_constrained_uses_one_row(small_splits):
    teacher = small_teacher()
    plan = make_plan(np.random.default_rng(0).random(small_splits.train.n), 8)
    log = run_episode_dqn(teacher, make_session(SCFG, small_splits, 0), plan, 200,
                          mode="greedy", constrained=True)
    assert np.mean([r["width"] == 1 for r in log.records]) >= 0.98


def test_plan_must_match_action_count(small_splits):
    teacher = small_teacher(n_actions=5)
    plan = make_plan(np.random.default_rng(0).random(small_splits.train.n), 8)
    with pytest.raises(ConfigurationError):
        run_episode_dqn(teacher, make_session(SCFG, small_splits, 0), plan, 3)


def test_training_determinism_and_round_trip(small_splits):
    plan = make_plan(np.random.default_rng(0).random(small_splits.train.n), 8)
    dumps = []
    for _ in range(2):
        teacher = small_teacher(seed=4)
        records = []
        train_teacher_dqn(teacher, small_splits, plan, 2, 12, SCFG,
                          on_episode=lambda ep: records.extend(ep.records))
        dumps.append(json.dumps(records))
    assert dumps[0] == dumps[1]
    data = json.loads(json.dumps(teacher_to_dict(teacher)))
    again = teacher_from_dict(data)
    assert checkpoint_hash(teacher_to_dict(again)) == checkpoint_hash(data)
    states = np.random.default_rng(1).random((4, SCFG.state_dim))
    np.testing.assert_array_equal(greedy_actions(again, states), greedy_actions(teacher, states))
