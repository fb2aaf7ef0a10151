"""Discrete-action teacher: a Q-network that picks one of N curriculum batches."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
import json

import numpy as np

from .exceptions import ConfigurationError, DimensionError, NumericError
from .losses import huber, huber_slope
from .nncore import (DenseNet, DenseNetSpec, SgdMomentum, backprop, copy_into, forward,
                     net_from_dict, net_to_dict, sgd_step)
from .replay import ReplayBuffer, Transition, stack
from .teacher_ddpg import CONSTRAINT_PROB, EpisodeLog, make_session


@dataclass
class DqnConfig:
    n_actions: int = 100
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    target_period: int = 10
    gamma: float = 0.95
    hidden_layers: int = 3
    hidden_nodes: int = 50
    dropout: float = 0.2
    momentum: float = 0.9
    teacher_lr: float = 0.01
    grad_clip: float = 0.0  # 0: no gradient-norm clipping
    td_clip: float = 1.0  # 0: plain squared TD loss
    buffer_capacity: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ConfigurationError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.target_period < 1:
            raise ConfigurationError("target_period must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1)")
        if self.n_actions < 1:
            raise ConfigurationError("n_actions must be >= 1")
        if self.buffer_capacity < self.target_period:
            raise ConfigurationError("buffer_capacity must be >= target_period")


@dataclass
class DqnTeacher:
    qnet: DenseNet
    target: DenseNet
    optimizer: SgdMomentum
    config: DqnConfig
    state_dim: int
    buffer: ReplayBuffer
    rng: np.random.Generator = field(repr=False)
    env_steps: int = 0
    episode_position: int = 0

    kind = "dqn"

    @classmethod
    def create(cls, state_dim, config=None):
        config = config or DqnConfig()
        rng = np.random.default_rng(config.seed)
        spec = DenseNetSpec((state_dim, *(config.hidden_nodes,) * config.hidden_layers,
                             config.n_actions), "linear", config.dropout)
        qnet = DenseNet.initialize(spec, rng)
        return cls(qnet, qnet.copy(), SgdMomentum.for_net(qnet, config.teacher_lr, config.momentum,
                                                      config.grad_clip or None),
                   config, state_dim, ReplayBuffer(config.buffer_capacity), rng)


def epsilon_at(i, iterations, config):
    """Linear decay from ``epsilon_start`` at ``i=0`` to ``epsilon_end`` at ``i=iterations``."""
    if not 0 <= i <= iterations:
        raise ConfigurationError(f"i={i} outside [0, {iterations}]")
    if iterations == 0:
        return config.epsilon_end
    frac = i / iterations
    # convex form so both endpoints come out exactly
    return (1.0 - frac) * config.epsilon_start + frac * config.epsilon_end


def select_batch(qnet, state, epsilon, rng, first=False):
    """Epsilon-greedy batch id; ``first`` forces a uniform draw."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (qnet.n_inputs,):
        raise DimensionError(f"state length {state.shape} != Q-network input {qnet.n_inputs}")
    n = qnet.n_outputs
    if first or rng.random() < epsilon:
        return int(rng.integers(n))
    return int(np.argmax(qnet.predict(state)[0]))


def td_loss_grad(qnet, target, batch, gamma, rng=None, train_mode=False, clip=0.0):
    """TD loss on the taken action's head; untaken heads get zero gradient.

    With ``clip > 0`` the squared error becomes a Huber loss, which bounds
    the per-sample gradient.
    """
    states, actions, rewards, next_states = stack(batch)
    actions = actions.astype(np.int64)
    y = rewards + gamma * target.predict(next_states).max(axis=1)
    trace = forward(qnet, states, train_mode=train_mode, rng=rng)
    q = trace.output
    rows = np.arange(len(batch))
    err = q[rows, actions] - y
    out_grad = np.zeros_like(q)
    out_grad[rows, actions] = huber_slope(err, clip) / len(batch)
    grads, _ = backprop(qnet, trace, out_grad)
    return float(np.mean(huber(err, clip))), grads, out_grad


def dqn_update(qnet, target, batch, gamma, optimizer, rng=None, clip=0.0):
    """One optimizer step on the TD loss; returns the pre-step loss."""
    if not batch:
        raise ConfigurationError("empty batch")
    loss, grads, _ = td_loss_grad(qnet, target, batch, gamma, rng, train_mode=rng is not None,
                                  clip=clip)
    if not np.isfinite(loss):
        raise NumericError(f"TD loss is {loss}")
    sgd_step(optimizer, qnet, grads)
    return loss


def target_sync(qnet, target):
    """Hard copy of the online parameters into ``target``."""
    copy_into(target, qnet)
    return target


def run_episode_dqn(teacher, session, plan, iterations, mode="train", constrained=False,
                    reward_fn=None, student_id=0, keep_states=False):
    """Drive one student through ``iterations`` batch choices.

    Learning mode updates the Q-network on every new transition, and every
    ``target_period`` steps on a replay sample before syncing the target.
    ``constrained`` replaces the chosen batch with its single easiest row
    with probability 0.999.
    """
    if iterations < 1:
        raise ConfigurationError("iterations must be >= 1")
    if mode not in ("train", "greedy"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    if plan.n_batches != teacher.config.n_actions:
        raise ConfigurationError(
            f"plan has {plan.n_batches} batches but the teacher chooses among {teacher.config.n_actions}")
    cfg = teacher.config
    learn = mode == "train"
    label = ("constrained" if constrained else "train") if learn else (
        "constrained-greedy" if constrained else "greedy")
    records, states = [], []
    state = session.state()
    for it in range(iterations):
        if keep_states:
            states.append(state)
        eps = epsilon_at(it, iterations, cfg) if learn else 0.0
        action = select_batch(teacher.qnet, state, eps, teacher.rng, first=learn and it == 0)
        indices = plan.batch(action)
        if constrained and teacher.rng.random() < CONSTRAINT_PROB:
            indices = indices[:1]
        step = session.step(indices, iteration=it)
        r = step.reward if reward_fn is None else float(reward_fn(action))
        next_state = session.state()
        if learn:
            transition = Transition(state, action, r, next_state)
            dqn_update(teacher.qnet, teacher.target, [transition], cfg.gamma, teacher.optimizer,
                       teacher.rng, cfg.td_clip)
            teacher.buffer.push(transition)
            teacher.env_steps += 1
            if teacher.env_steps % cfg.target_period == 0 and len(teacher.buffer) >= cfg.target_period:
                dqn_update(teacher.qnet, teacher.target,
                           teacher.buffer.sample(cfg.target_period, teacher.rng), cfg.gamma,
                           teacher.optimizer, teacher.rng, cfg.td_clip)
                target_sync(teacher.qnet, teacher.target)
            teacher.episode_position = it + 1
        records.append({
            "student_id": student_id, "iter": it, "action_id": action,
            "width": int(indices.size), "reward": r, "train_acc": step.train_acc,
            "val_acc": step.val_acc, "test_acc": step.test_acc, "epsilon": eps, "mode": label,
        })
        state = next_state
    return EpisodeLog(records, session.best_acc, session.best_iter, session,
                      states if keep_states else None)


def train_teacher_dqn(teacher, splits, plan, n_students, iterations, student_config,
                      constrained=False, reward_fn=None, select_on="test", on_episode=None):
    if n_students < 1 or iterations < 1:
        raise ConfigurationError("n_students and iterations must be >= 1")
    summary = []
    for x in range(n_students):
        session = make_session(student_config, splits, student_config.seed + x, select_on)
        log = run_episode_dqn(teacher, session, plan, iterations, "train", constrained, reward_fn,
                              student_id=x)
        summary.append({"student_id": x, "best_acc": log.best_acc, "best_iter": log.best_iter})
        if on_episode is not None:
            on_episode(log)
    return teacher, summary


def greedy_actions(teacher, states):
    return np.argmax(teacher.qnet.predict(states), axis=1)


def teacher_to_dict(teacher):
    return {
        "format_version": 1,
        "kind": "dqn",
        "state_dim": teacher.state_dim,
        "config": asdict(teacher.config),
        "qnet": net_to_dict(teacher.qnet, teacher.optimizer),
        "target": net_to_dict(teacher.target),
        "rng": teacher.rng.bit_generator.state,
        "env_steps": teacher.env_steps,
        "episode_position": teacher.episode_position,
    }


def teacher_from_dict(data):
    if data.get("kind") != "dqn":
        raise ConfigurationError(f"not a dqn checkpoint: kind={data.get('kind')!r}")
    config = DqnConfig(**data["config"])
    qnet, opt = net_from_dict(data["qnet"])
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng"]
    return DqnTeacher(qnet, net_from_dict(data["target"])[0], opt, config, int(data["state_dim"]),
                      ReplayBuffer(config.buffer_capacity), rng, int(data["env_steps"]),
                      int(data.get("episode_position", 0)))


def save_teacher(path, teacher):
    Path(path).write_text(json.dumps(teacher_to_dict(teacher), sort_keys=True))
