"""Bounded FIFO experience replay shared by both teacher kinds."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError, DimensionError, InsufficientDataError


class Transition(NamedTuple):
    state: np.ndarray
    action: object  # raw action pair (continuous teacher) or batch id (discrete teacher)
    reward: float
    next_state: np.ndarray


class ReplayBuffer:
    """Ring buffer of transitions; once full, the oldest entry is overwritten."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ConfigurationError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._items = []
        self._head = 0  # position of the oldest item once full

    def __len__(self):
        return len(self._items)

    @property
    def size(self):
        return len(self._items)

    def push(self, transition):
        if len(transition.state) != len(transition.next_state):
            raise DimensionError("state and next_state lengths differ")
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._head] = transition
            self._head = (self._head + 1) % self.capacity

    def ordered(self):
        """Stored transitions, oldest first."""
        return self._items[self._head:] + self._items[:self._head]

    def recent(self, m):
        if m > len(self._items):
            raise InsufficientDataError(f"asked for {m} transitions, buffer holds {len(self)}")
        return self.ordered()[-m:] if m else []

    def sample(self, m, rng):
        """``m`` distinct transitions drawn uniformly."""
        if m > len(self._items):
            raise InsufficientDataError(f"asked for {m} transitions, buffer holds {len(self)}")
        picks = rng.choice(len(self._items), size=m, replace=False)
        return [self._items[i] for i in picks]

    def to_list(self):
        return [
            {"state": t.state.tolist(), "action": np.asarray(t.action).tolist(),
             "reward": t.reward, "next_state": t.next_state.tolist()}
            for t in self.ordered()
        ]


def stack(batch):
    """Column-stack a list of transitions into arrays."""
    states = np.stack([t.state for t in batch])
    actions = np.stack([np.asarray(t.action) for t in batch])
    rewards = np.asarray([t.reward for t in batch], dtype=np.float64)
    next_states = np.stack([t.next_state for t in batch])
    return states, actions, rewards, next_states
