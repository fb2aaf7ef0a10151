"""Continuous-action teacher trained with deep deterministic policy gradients.

The actor maps a student state to two numbers in [-1, 1]: where along the
sorted curriculum to centre the next batch, and how wide that batch is. The
critic takes ``state ⊕ action`` and has one Q head per action coordinate.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .curriculum import slice_window
from .exceptions import ConfigurationError, DimensionError, InsufficientDataError, NumericError
from .losses import huber, huber_slope
from .nncore import (DenseNet, DenseNetSpec, SgdMomentum, backprop, forward, net_from_dict,
                     net_to_dict, sgd_step)
from .replay import ReplayBuffer, Transition, stack
from .student import StudentSession, init_student

CONSTRAINT_PROB = 0.999


@dataclass
class DdpgConfig:
    gamma: float = 0.95
    tau: float = 0.005
    update_frequency: int = 20
    replay_batch: int = 10
    replay_every: int = 10
    buffer_capacity: int = 1_000_000
    hidden_layers: int = 3
    hidden_nodes: int = 50
    dropout: float = 0.2
    momentum: float = 0.9
    teacher_lr: float = 0.01
    grad_clip: float = 0.0  # 0: no gradient-norm clipping
    td_clip: float = 1.0  # 0: plain squared critic loss
    critic_heads: int = 2
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_sigma_final: float = 0.02
    width_max: int = 0  # 0 -> ceil(n_train / 10); negative -> n_train
    final_init: float = 3e-3  # output-layer init bound; 0 -> Glorot
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1]")
        if self.buffer_capacity < self.replay_batch:
            raise ConfigurationError("buffer_capacity must be >= replay_batch")
        if self.critic_heads not in (1, 2):
            raise ConfigurationError("critic_heads must be 1 or 2")
        if min(self.update_frequency, self.replay_batch, self.replay_every) < 1:
            raise ConfigurationError("update_frequency, replay_batch and replay_every must be >= 1")


@dataclass
class Action:
    raw: np.ndarray
    center_index: int
    width: int


class OuNoise:
    """Ornstein-Uhlenbeck process ``x += theta * (0 - x) + sigma * N(0, 1)``."""

    def __init__(self, theta=0.15, sigma=0.2, size=2, seed=0):
        self.theta = theta
        self.sigma = sigma
        self.size = size
        self.rng = np.random.default_rng(seed)
        self.state = np.zeros(size)

    def reset(self):
        self.state = np.zeros(self.size)

    def sample(self):
        self.state = self.state - self.theta * self.state + self.sigma * self.rng.standard_normal(self.size)
        return self.state.copy()


def _mlp(n_in, n_out, config, head, rng):
    spec = DenseNetSpec((n_in, *(config.hidden_nodes,) * config.hidden_layers, n_out), head,
                        config.dropout)
    return DenseNet.initialize(spec, rng, final_limit=config.final_init or None)


@dataclass
class DdpgTeacher:
    actor: DenseNet
    actor_target: DenseNet
    critic: DenseNet
    critic_target: DenseNet
    actor_opt: SgdMomentum
    critic_opt: SgdMomentum
    config: DdpgConfig
    state_dim: int
    noise: OuNoise
    buffer: ReplayBuffer
    rng: np.random.Generator = field(repr=False)
    env_steps: int = 0
    update_count: int = 0
    noise_decay_steps: int = 0

    kind = "ddpg"

    @classmethod
    def create(cls, state_dim, config=None):
        config = config or DdpgConfig()
        rng = np.random.default_rng(config.seed)
        actor = _mlp(state_dim, 2, config, "tanh", rng)
        critic = _mlp(state_dim + 2, config.critic_heads, config, "linear", rng)
        return cls(
            actor=actor, actor_target=actor.copy(), critic=critic, critic_target=critic.copy(),
            actor_opt=SgdMomentum.for_net(actor, config.teacher_lr, config.momentum,
                                          config.grad_clip or None),
            critic_opt=SgdMomentum.for_net(critic, config.teacher_lr, config.momentum,
                                           config.grad_clip or None),
            config=config, state_dim=state_dim,
            noise=OuNoise(config.ou_theta, config.ou_sigma, 2, seed=config.seed + 1),
            buffer=ReplayBuffer(config.buffer_capacity), rng=rng,
        )

    def current_sigma(self):
        c = self.config
        if self.noise_decay_steps <= 0:
            return c.ou_sigma
        frac = min(1.0, self.env_steps / self.noise_decay_steps)
        return c.ou_sigma + (c.ou_sigma_final - c.ou_sigma) * frac

    def policy(self, states):
        """Greedy raw actions for a batch of states."""
        return self.actor.predict(states)


def default_width_max(n_train):
    return max(1, math.ceil(n_train / 10))


def resolve_width_max(width_max, n_train):
    """Configured width bound: 0 picks the default, a negative value the whole set."""
    if width_max < 0:
        return n_train
    return width_max or default_width_max(n_train)


def scale_action(raw, n_train, width_max):
    """Map a raw pair in [-1, 1]^2 to ``(center_index, width)``."""
    r0, r1 = (float(v) for v in np.clip(raw, -1.0, 1.0))
    center = int(math.floor((r0 + 1.0) / 2.0 * (n_train - 1) + 0.5))
    width = int(math.floor((r1 + 1.0) / 2.0 * width_max + 0.5))
    return min(max(center, 0), n_train - 1), min(max(width, 0), width_max)


def act(teacher, state, noise=None, explore=False, n_train=None, width_max=None):
    """Raw action ``tanh(actor(state)) (+ noise)``, clipped, then scaled if sizes are given.

    ``noise`` is an explicit noise vector; when it is None and ``explore`` is
    set, the teacher's OU process supplies it.
    """
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (teacher.state_dim,):
        raise DimensionError(f"state length {state.shape} != actor input {teacher.state_dim}")
    raw = teacher.actor.predict(state)[0]
    if explore:
        if noise is None:
            teacher.noise.sigma = teacher.current_sigma()
            noise = teacher.noise.sample()
        raw = raw + np.asarray(noise, dtype=np.float64)
    raw = np.clip(raw, -1.0, 1.0)
    if n_train is None:
        return Action(raw, -1, -1)
    if width_max is None:
        width_max = default_width_max(n_train)
    center, width = scale_action(raw, n_train, width_max)
    return Action(raw, center, width)


def critic_targets(batch, teacher, gamma=None):
    """Bootstrap targets ``r + gamma * Q_T(s', mu_T(s'))`` per head; no terminal masking."""
    if not batch:
        raise ConfigurationError("empty batch")
    gamma = teacher.config.gamma if gamma is None else gamma
    _, _, rewards, next_states = stack(batch)
    next_actions = teacher.actor_target.predict(next_states)
    q_next = teacher.critic_target.predict(np.hstack([next_states, next_actions]))
    return rewards[:, None] + gamma * q_next


def critic_loss_grad(critic, inputs, targets, rng=None, train_mode=False, clip=0.0):
    """Mean over batch and heads of the (optionally Huber-clipped) squared error."""
    trace = forward(critic, inputs, train_mode=train_mode, rng=rng)
    q = trace.output
    err = q - targets
    loss = float(np.mean(huber(err, clip)))
    grads, _ = backprop(critic, trace, huber_slope(err, clip) / q.size)
    return loss, grads


def train_critic(teacher, batch):
    """One SGD-momentum step of the critic towards :func:`critic_targets`; returns the loss."""
    if not batch:
        raise ConfigurationError("empty batch")
    y = critic_targets(batch, teacher)
    states, actions, _, _ = stack(batch)
    loss, grads = critic_loss_grad(teacher.critic, np.hstack([states, actions]), y,
                                   teacher.rng, train_mode=True, clip=teacher.config.td_clip)
    if not np.isfinite(loss):
        raise NumericError(f"critic loss is {loss}")
    sgd_step(teacher.critic_opt, teacher.critic, grads)
    return loss


def actor_objective_grad(actor, critic, states, rng=None, train_mode=False):
    """Mean over the batch of the summed critic heads at ``(s, mu(s))``.

    Returns the objective and the gradient of its *negative* with respect to
    the actor parameters, so a descent step is an ascent on the objective.
    """
    a_trace = forward(actor, states, train_mode=train_mode, rng=rng)
    actions = a_trace.output
    c_trace = forward(critic, np.hstack([states, actions]))
    q = c_trace.output
    batch = q.shape[0]
    objective = float(q.sum() / batch)
    _, input_grad = backprop(critic, c_trace, np.full(q.shape, -1.0 / batch))
    grads, _ = backprop(actor, a_trace, input_grad[:, states.shape[1]:])
    return objective, grads


def train_actor(teacher, states):
    """One policy-gradient ascent step on the actor; the critic is left untouched."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if states.shape[0] == 0:
        raise ConfigurationError("empty batch")
    objective, grads = actor_objective_grad(teacher.actor, teacher.critic, states,
                                            teacher.rng, train_mode=True)
    sgd_step(teacher.actor_opt, teacher.actor, grads)
    return objective


def soft_update(target, online, tau):
    """``target <- tau * online + (1 - tau) * target``, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError("tau must lie in [0, 1]")
    if not target.same_shape(online):
        raise DimensionError("target and online networks differ in shape")
    for t, o in zip(target.parameters(), online.parameters()):
        t *= 1.0 - tau
        t += tau * o
    return target


def perturb_state(state, sigma, rng):
    """Add iid zero-mean Gaussian noise of standard deviation ``sigma``."""
    if sigma < 0:
        raise ConfigurationError("sigma must be >= 0")
    state = np.asarray(state, dtype=np.float64)
    if sigma == 0:
        return state.copy()
    return state + rng.normal(0.0, sigma, size=state.shape)


def update_teacher(teacher, batch):
    """Critic then actor step on ``batch``; soft-updates targets every U updates."""
    critic_loss = train_critic(teacher, batch)
    train_actor(teacher, np.stack([t.state for t in batch]))
    teacher.update_count += 1
    if teacher.update_count % teacher.config.update_frequency == 0:
        soft_update(teacher.critic_target, teacher.critic, teacher.config.tau)
        soft_update(teacher.actor_target, teacher.actor, teacher.config.tau)
    return critic_loss


def replay_round(teacher):
    """Most recent ``m`` transitions, then a uniform sample of ``m``."""
    m = teacher.config.replay_batch
    try:
        update_teacher(teacher, teacher.buffer.recent(m))
        update_teacher(teacher, teacher.buffer.sample(m, teacher.rng))
    except InsufficientDataError:
        pass


@dataclass
class EpisodeLog:
    records: list
    best_acc: float
    best_iter: int
    session: StudentSession = field(repr=False, default=None)
    states: list = field(repr=False, default=None)


def run_episode(teacher, session, plan, iterations, mode="train", constrained=False,
                reward_fn=None, student_id=0, keep_states=False):
    """Let ``teacher`` drive one student for ``iterations`` steps.

    ``mode='train'`` explores and learns; ``mode='greedy'`` does neither.
    With ``constrained`` the width is forced to 0 with probability 0.999.
    ``reward_fn(action)`` replaces the accuracy-based reward when given.
    """
    if iterations < 1:
        raise ConfigurationError("iterations must be >= 1")
    if mode not in ("train", "greedy"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    if plan.n != session.train.n:
        raise ConfigurationError("plan and session disagree on the training-set size")
    learn = mode == "train"
    n_train = plan.n
    width_max = resolve_width_max(teacher.config.width_max, n_train)
    label = ("constrained" if constrained else "train") if learn else (
        "constrained-greedy" if constrained else "greedy")
    if learn:
        teacher.noise.reset()
    records, states = [], []
    state = session.state()
    for it in range(iterations):
        if keep_states:
            states.append(state)
        action = act(teacher, state, explore=learn, n_train=n_train, width_max=width_max)
        if constrained and teacher.rng.random() < CONSTRAINT_PROB:
            action.raw[1] = -1.0
            action.width = 0
        indices = slice_window(plan, action.center_index, action.width)
        step = session.step(indices, iteration=it)
        r = step.reward if reward_fn is None else float(reward_fn(action))
        next_state = session.state()
        if learn:
            teacher.buffer.push(Transition(state, action.raw.copy(), r, next_state))
            teacher.env_steps += 1
            if teacher.env_steps % teacher.config.replay_every == 0:
                replay_round(teacher)
        records.append({
            "student_id": student_id, "iter": it, "center": action.center_index,
            "width": action.width, "reward": r, "train_acc": step.train_acc,
            "val_acc": step.val_acc, "test_acc": step.test_acc, "mode": label,
        })
        state = next_state
    return EpisodeLog(records, session.best_acc, session.best_iter, session,
                      states if keep_states else None)


def make_session(student_config, splits, student_seed, select_on="test"):
    student_config = type(student_config)(**{**asdict(student_config), "seed": student_seed})
    student = init_student(student_config, splits.train.d, splits.train.n_classes)
    return StudentSession(student, splits.train, splits.validation, splits.test,
                          eval_seed=student_seed, select_on=select_on)


def train_teacher(teacher, splits, plan, n_students, iterations, student_config,
                  constrained=False, reward_fn=None, select_on="test", on_episode=None):
    """Train ``teacher`` on ``n_students`` fresh students in sequence.

    The replay buffer carries over between students. Returns the teacher and
    one summary dict per student.
    """
    if n_students < 1 or iterations < 1:
        raise ConfigurationError("n_students and iterations must be >= 1")
    teacher.noise_decay_steps = max(1, n_students * iterations // 2)
    summary = []
    for x in range(n_students):
        session = make_session(student_config, splits, student_config.seed + x, select_on)
        log = run_episode(teacher, session, plan, iterations, "train", constrained, reward_fn,
                          student_id=x)
        summary.append({"student_id": x, "best_acc": log.best_acc, "best_iter": log.best_iter})
        if on_episode is not None:
            on_episode(log)
    return teacher, summary


# -- persistence --------------------------------------------------------------

def teacher_to_dict(teacher):
    return {
        "format_version": 1,
        "kind": "ddpg",
        "state_dim": teacher.state_dim,
        "config": asdict(teacher.config),
        "actor": net_to_dict(teacher.actor, teacher.actor_opt),
        "actor_target": net_to_dict(teacher.actor_target),
        "critic": net_to_dict(teacher.critic, teacher.critic_opt),
        "critic_target": net_to_dict(teacher.critic_target),
        "noise": {"state": teacher.noise.state.tolist(), "sigma": teacher.noise.sigma,
                  "rng": teacher.noise.rng.bit_generator.state},
        "rng": teacher.rng.bit_generator.state,
        "env_steps": teacher.env_steps,
        "update_count": teacher.update_count,
        "noise_decay_steps": teacher.noise_decay_steps,
    }


def teacher_from_dict(data):
    if data.get("kind") != "ddpg":
        raise ConfigurationError(f"not a ddpg checkpoint: kind={data.get('kind')!r}")
    config = DdpgConfig(**data["config"])
    actor, actor_opt = net_from_dict(data["actor"])
    critic, critic_opt = net_from_dict(data["critic"])
    noise = OuNoise(config.ou_theta, data["noise"]["sigma"], 2)
    noise.state = np.asarray(data["noise"]["state"], dtype=np.float64)
    noise.rng.bit_generator.state = data["noise"]["rng"]
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng"]
    return DdpgTeacher(
        actor=actor, actor_target=net_from_dict(data["actor_target"])[0],
        critic=critic, critic_target=net_from_dict(data["critic_target"])[0],
        actor_opt=actor_opt, critic_opt=critic_opt, config=config,
        state_dim=int(data["state_dim"]), noise=noise,
        buffer=ReplayBuffer(config.buffer_capacity), rng=rng,
        env_steps=int(data["env_steps"]), update_count=int(data["update_count"]),
        noise_decay_steps=int(data.get("noise_decay_steps", 0)),
    )


def checkpoint_hash(data):
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def save_teacher(path, teacher):
    Path(path).write_text(json.dumps(teacher_to_dict(teacher), sort_keys=True))
