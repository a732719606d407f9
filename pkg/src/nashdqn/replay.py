"""Experience replay and the two learner topologies.

``parallel``
    every agent owns a network and a buffer; nothing is shared.
``async_single``
    one learner network trained from one buffer that both agents write to;
    each agent acts from its own copy of the learner, refreshed every
    ``dissemination_freq`` updates.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from nashdqn.errors import BurnInError, ConfigError, UsageError
from nashdqn.qnet import NetworkParams, snapshot_params


class Transition(NamedTuple):
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform, with-replacement sampling."""

    def __init__(self, obs_dim: int, capacity: int = 1_000_000, burn_in: int = 50_000):
        if capacity < 1:
            raise ConfigError("experience_replay_buffer_size must be positive")
        if burn_in < 0:
            raise ConfigError("experience_replay_burn_in must be non-negative")
        self.capacity = int(capacity)
        self.burn_in = int(burn_in)
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    @property
    def ready(self) -> bool:
        return len(self) >= self.burn_in

    def push(self, obs, action: int, reward: float, next_obs, terminal: bool) -> None:
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminals[i] = terminal
        self.inserted += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if not self.ready:
            raise BurnInError(f"replay buffer holds {len(self)} transitions, burn-in is {self.burn_in}")
        if len(self) == 0:
            raise BurnInError("cannot sample from an empty buffer")
        idx = rng.integers(len(self), size=batch_size)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.terminals[idx])

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        n = len(self)
        start = self.inserted - n
        out = []
        for k in range(start, self.inserted):
            i = k % self.capacity
            out.append(Transition(self.obs[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                                  self.next_obs[i].copy(), bool(self.terminals[i])))
        return out


class TopologyKind(Enum):
    PARALLEL = "parallel"
    ASYNC_SINGLE = "async_single"


@dataclass(frozen=True)
class Topology:
    kind: TopologyKind = TopologyKind.PARALLEL
    dissemination_freq: int = 10_000

    @classmethod
    def from_config(cls, name: str, dissemination_freq: int = 10_000) -> "Topology":
        try:
            kind = TopologyKind(name)
        except ValueError:
            raise ConfigError(f"topology: unknown topology {name!r} (choose from parallel, async_single)") from None
        if dissemination_freq < 1:
            raise ConfigError("target_dissemination_freq must be positive")
        return cls(kind, int(dissemination_freq))


def disseminate(topology: Topology, learner: NetworkParams, update_count: int,
                agent_snapshots: Sequence[NetworkParams]) -> list[NetworkParams]:
    """Hand every agent a fresh copy of the learner on dissemination updates."""
    if topology.kind is not TopologyKind.ASYNC_SINGLE:
        raise UsageError("disseminate() only applies to the async_single topology")
    if update_count % topology.dissemination_freq == 0:
        return [snapshot_params(learner) for _ in agent_snapshots]
    return list(agent_snapshots)
