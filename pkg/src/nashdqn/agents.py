"""Algorithm-specific action selection and TD-targets.

Five controllers are supported:

``idqn``
    Each agent has a network over its own actions and treats the other
    agent as part of the environment. Inputs are the agent's self-first
    observation.
``set_controller``
    One network over the joint action space picks both agents' actions.
``friend``
    Each agent has its own joint-space network and plays its coordinate of
    that network's best joint action.
``nash_q_public`` / ``nash_q_private``
    Each agent builds a payoff matrix per agent from joint-space Q-values and
    plays a pure Nash equilibrium (with tie-break and no-equilibrium rules).
    The private variant has no access to the other agent's network and uses
    its own for both matrices.

Joint-space networks all read the canonical observation (agent 0's view)
and index joint actions agent-0 major, so Q-values from different agents'
networks line up cell for cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from nashdqn.errors import ConfigError, UsageError
from nashdqn.game import (
    build_payoffs,
    check_rules,
    select_friend,
    select_nash_actions,
    select_set_controller,
)
from nashdqn.qnet import NetworkParams, forward, q_vector


class AlgorithmKind(Enum):
    IDQN = "idqn"
    SET_CONTROLLER = "set_controller"
    FRIEND = "friend"
    NASH_Q_PUBLIC = "nash_q_public"
    NASH_Q_PRIVATE = "nash_q_private"

    @classmethod
    def from_config(cls, name: str, public: bool = True) -> "AlgorithmKind":
        if name == "nash_q":
            return cls.NASH_Q_PUBLIC if public else cls.NASH_Q_PRIVATE
        try:
            return cls(name)
        except ValueError:
            raise ConfigError(
                f"algorithm.kind: unknown algorithm {name!r} "
                "(choose from idqn, set_controller, friend, nash_q)"
            ) from None

    @property
    def joint(self) -> bool:
        return self is not AlgorithmKind.IDQN

    @property
    def nash(self) -> bool:
        return self in (AlgorithmKind.NASH_Q_PUBLIC, AlgorithmKind.NASH_Q_PRIVATE)

    @property
    def n_networks(self) -> int:
        return 1 if self is AlgorithmKind.SET_CONTROLLER else 2

    def output_dim(self, n_actions: int) -> int:
        return n_actions**2 if self.joint else n_actions


@dataclass(frozen=True)
class NashRules:
    tie_break: str = "max_sum"
    no_nash: str = "greedy"
    tol: float = 0.0

    def __post_init__(self):
        check_rules(self.tie_break, self.no_nash)


@dataclass(frozen=True)
class ExplorationSchedule:
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.1
    decay_fraction: float = 0.75
    total_updates: int = 500_000

    def __post_init__(self):
        if not 0.0 <= self.epsilon_final <= self.epsilon_initial <= 1.0:
            raise ConfigError("exploration: need 0 <= final epsilon <= initial epsilon <= 1")
        if not 0.0 <= self.decay_fraction <= 1.0:
            raise ConfigError("exploration_decay_factor must lie in [0, 1]")

    def epsilon_at(self, update_count: int) -> float:
        if update_count < 0:
            raise UsageError("update_count must be non-negative")
        window = self.decay_fraction * self.total_updates
        if update_count >= window:
            return self.epsilon_final
        frac = update_count / window
        return self.epsilon_initial + (self.epsilon_final - self.epsilon_initial) * frac


def epsilon_at(schedule: ExplorationSchedule, update_count: int) -> float:
    return schedule.epsilon_at(update_count)


def network_input(kind: AlgorithmKind, obs: Sequence[np.ndarray], agent_id: int) -> np.ndarray:
    """The observation agent ``agent_id``'s network consumes."""
    return obs[agent_id] if kind is AlgorithmKind.IDQN else obs[0]


def _bootstrap(kind, next_obs, params, agent_id, rules):
    if kind in (AlgorithmKind.IDQN, AlgorithmKind.FRIEND):
        return forward(params[agent_id], next_obs).max(axis=-1)
    if kind is AlgorithmKind.SET_CONTROLLER:
        return forward(params[0], next_obs).max(axis=-1)
    q_self = forward(params[agent_id], next_obs)
    if kind is AlgorithmKind.NASH_Q_PUBLIC:
        q_other = forward(params[1 - agent_id], next_obs)
        q0, q1 = (q_self, q_other) if agent_id == 0 else (q_other, q_self)
    else:
        q0 = q1 = q_self
    pair = build_payoffs(q0, q1)
    acts = select_nash_actions(pair, rules.tie_break, rules.no_nash, rules.tol)
    n = pair.shape[0]
    idx = acts[..., 0] * n + acts[..., 1]
    return np.take_along_axis(q_self, idx[..., None], axis=-1)[..., 0]


def td_targets(kind: AlgorithmKind, rewards, terminals, next_obs, target_params: Sequence[NetworkParams],
               discount: float, agent_id: int = 0, rules: NashRules = NashRules()) -> np.ndarray:
    """Regression targets for a batch of transitions of one agent's network.

    ``next_obs`` is already in that network's input frame. Terminal
    transitions get their reward back exactly.
    """
    if not 0.0 <= discount < 1.0:
        raise UsageError(f"discount must lie in [0, 1), got {discount}")
    rewards = np.asarray(rewards, dtype=float)
    terminals = np.asarray(terminals, dtype=bool)
    next_obs = np.asarray(next_obs, dtype=float)
    n_out = target_params[0].out_dim
    if kind.joint and int(round(np.sqrt(n_out))) ** 2 != n_out:
        raise UsageError(f"{kind.value} needs a joint-space network, got {n_out} outputs")
    if any(p.out_dim != n_out for p in target_params):
        raise UsageError("target networks disagree on output dimension")
    boot = _bootstrap(kind, next_obs, target_params, agent_id, rules)
    return np.where(terminals, rewards, rewards + discount * boot)


def td_target(kind, reward, terminal, next_obs, target_params, discount, agent_id=0, rules=NashRules()) -> float:
    """Single-transition convenience wrapper around :func:`td_targets`."""
    if terminal:
        return float(reward)
    return float(td_targets(kind, [reward], [terminal], [next_obs], target_params, discount, agent_id, rules)[0])


def greedy_joint(kind: AlgorithmKind, obs, params: Sequence[NetworkParams], rules: NashRules = NashRules()):
    """Exploiting actions for a batch of states.

    ``obs`` holds one ``(B, d)`` array per agent. Returns the ``(B, 2)`` joint
    actions and each network's Q-values ``[(B, out), ...]``.
    """
    if kind is AlgorithmKind.IDQN:
        qs = [forward(params[i], obs[i]) for i in range(2)]
        acts = np.stack([qs[0].argmax(-1), qs[1].argmax(-1)], axis=-1)
        return acts, qs
    x = obs[0]
    if kind is AlgorithmKind.SET_CONTROLLER:
        q = forward(params[0], x)
        return select_set_controller(q), [q]
    qs = [forward(params[i], x) for i in range(2)]
    if kind is AlgorithmKind.FRIEND:
        acts = np.stack([select_friend(qs[0], 0), select_friend(qs[1], 1)], axis=-1)
        return acts, qs

    def select(q0, q1):
        return select_nash_actions(build_payoffs(q0, q1), rules.tie_break, rules.no_nash, rules.tol)

    if kind is AlgorithmKind.NASH_Q_PUBLIC:
        return select(qs[0], qs[1]), qs
    # each agent solves the game it imagines from its own network alone
    a0 = select(qs[0], qs[0])[..., 0]
    a1 = select(qs[1], qs[1])[..., 1]
    return np.stack([a0, a1], axis=-1), qs


def act(kind: AlgorithmKind, obs, params: Sequence[NetworkParams], epsilon: float,
        rng: np.random.Generator, n_actions: int, rules: NashRules = NashRules()) -> tuple[int, int]:
    """Epsilon-greedy joint action for one state.

    IDQN agents explore independently; joint-space controllers share one
    draw and, when exploring, sample the whole joint action uniformly.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise UsageError(f"epsilon must lie in [0, 1], got {epsilon}")
    if kind is AlgorithmKind.IDQN:
        explore = rng.random(2) < epsilon
        return tuple(
            int(rng.integers(n_actions)) if explore[i] else int(q_vector(params[i], obs[i]).argmax())
            for i in range(2)
        )
    if rng.random() < epsilon:
        return divmod(int(rng.integers(n_actions * n_actions)), n_actions)
    if kind is AlgorithmKind.SET_CONTROLLER:
        return divmod(int(q_vector(params[0], obs[0]).argmax()), n_actions)
    if kind is AlgorithmKind.FRIEND:
        return (divmod(int(q_vector(params[0], obs[0]).argmax()), n_actions)[0],
                divmod(int(q_vector(params[1], obs[0]).argmax()), n_actions)[1])
    greedy, _ = greedy_joint(kind, [o[None, :] for o in obs], params, rules)
    return int(greedy[0, 0]), int(greedy[0, 1])
