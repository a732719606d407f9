"""Two-agent gridworld Markov games: Sync, Warehouse and Predator Prey.

All three boards share the same conventions:

* cells are ``(row, col)`` with ``(0, 0)`` in the upper left,
* moves that would leave the board (or enter a barrier) leave the agent
  where it was,
* both agents move simultaneously from the pre-step positions and may share
  a cell,
* every episode is cut off after ``max_steps`` steps.

Observations are coordinate vectors written from the observing agent's
point of view: its own fields come first, then the other agent's, then any
shared fields (box, prey).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

from nashdqn.errors import ConfigError, UsageError


class Action(IntEnum):
    UP = 0
    RIGHT = 1
    DOWN = 2
    LEFT = 3
    STAY = 4


MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1), (0, 0))


class GridPos(NamedTuple):
    row: int
    col: int


def joint_index(a0: int, a1: int, n_actions: int) -> int:
    """Flatten a joint action, agent 0 major."""
    return int(a0) * n_actions + int(a1)


def split_joint(index: int, n_actions: int) -> tuple[int, int]:
    return divmod(int(index), n_actions)


@dataclass
class EnvState:
    agent_positions: list[GridPos]
    step_count: int = 0
    terminal: bool = False
    # Predator Prey
    prey_positions: list[GridPos | None] = field(default_factory=list)
    barriers: frozenset[GridPos] = frozenset()
    # Warehouse
    carrying: list[bool] = field(default_factory=list)
    box_pos: GridPos | None = None
    box_shelf: int = 0
    boxes_delivered: int = 0


@dataclass
class StepResult:
    next_obs: list[np.ndarray]
    rewards: np.ndarray
    terminal: bool
    truncated: bool = False
    """True when the episode ended only because the step limit was hit."""


class GridGame:
    """Shared board mechanics. Subclasses fill in placement, rules and encoding."""

    name = "grid"
    n_agents = 2
    n_actions = 4
    default_reward = 10.0

    def __init__(
        self,
        height: int,
        width: int | None = None,
        *,
        reward: float | None = None,
        cooperative: bool = True,
        normalize: bool = True,
        max_steps: int = 100,
        seed: int | None = None,
    ):
        width = height if width is None else width
        if height < 2 or width < 2:
            raise ConfigError(f"board must be at least 2x2, got {height}x{width}")
        if max_steps < 1:
            raise ConfigError("max_steps must be positive")
        self.height = int(height)
        self.width = int(width)
        self.reward = float(self.default_reward if reward is None else reward)
        self.cooperative = bool(cooperative)
        self.normalize = bool(normalize)
        self.max_steps = int(max_steps)
        self.rng = np.random.default_rng(seed)
        self.state: EnvState | None = None
        self._row_scale = 1.0 / (self.height - 1) if normalize else 1.0
        self._col_scale = 1.0 / (self.width - 1) if normalize else 1.0

    # -- public API -------------------------------------------------------
    @property
    def joint_actions(self) -> int:
        return self.n_actions**2

    @property
    def obs_dim(self) -> int:
        raise NotImplementedError

    def split_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Observation indices for the (self, other) inputs of a split-stream network."""
        raise NotImplementedError

    def reset(self, seed: int | None = None) -> list[np.ndarray]:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.state = self._initial_state()
        return [self.observe(i) for i in range(self.n_agents)]

    def step(self, joint: Sequence[int]) -> StepResult:
        s = self.state
        if s is None:
            raise UsageError("step() called before reset()")
        if s.terminal:
            raise UsageError("step() called on a terminal state; call reset()")
        if len(joint) != self.n_agents:
            raise UsageError(f"expected {self.n_agents} actions, got {len(joint)}")
        for a in joint:
            if not 0 <= int(a) < self.n_actions:
                raise UsageError(f"action {a} is not legal in {self.name}")

        s.agent_positions = [self._move(p, int(a)) for p, a in zip(s.agent_positions, joint)]
        rewards = self._apply_rules(s)
        s.step_count += 1
        truncated = False
        if not s.terminal and s.step_count >= self.max_steps:
            s.terminal = truncated = True
        obs = [self.observe(i) for i in range(self.n_agents)]
        return StepResult(obs, rewards, s.terminal, truncated)

    def observe(self, agent_id: int) -> np.ndarray:
        raise NotImplementedError

    def best_return(self) -> float:
        """Largest team return an episode can produce."""
        raise NotImplementedError

    def team_reward(self, rewards: np.ndarray) -> float:
        """Scalar episode score: the common reward, or the sum when not shared."""
        return float(rewards[0]) if self.cooperative else float(np.sum(rewards))

    def render(self) -> str:
        grid = [[" . " for _ in range(self.width)] for _ in range(self.height)]
        self._paint(grid)
        for i, p in enumerate(self.state.agent_positions):
            cell = grid[p.row][p.col]
            grid[p.row][p.col] = "AA " if cell.startswith("A") else f"A{i} "
        return "\n".join("".join(row).rstrip() for row in grid)

    # -- helpers ----------------------------------------------------------
    def _move(self, pos: GridPos, action: int) -> GridPos:
        dr, dc = MOVES[action]
        r, c = pos.row + dr, pos.col + dc
        if 0 <= r < self.height and 0 <= c < self.width and not self._blocked(r, c):
            return GridPos(r, c)
        return pos

    def _blocked(self, row: int, col: int) -> bool:
        return False

    def _sample_cells(self, k: int, exclude: set[GridPos]) -> list[GridPos]:
        free = [
            GridPos(r, c)
            for r in range(self.height)
            for c in range(self.width)
            if GridPos(r, c) not in exclude
        ]
        if len(free) < k:
            raise ConfigError(
                f"{self.height}x{self.width} {self.name} board cannot place {k} entities distinctly"
            )
        picks = self.rng.choice(len(free), size=k, replace=False)
        return [free[i] for i in picks]

    def _pos(self, p: GridPos) -> list[float]:
        return [p.row * self._row_scale, p.col * self._col_scale]

    def _credit(self, rewards: np.ndarray, agent: int, amount: float) -> None:
        if self.cooperative:
            rewards += amount
        else:
            rewards[agent] += amount

    def _paint(self, grid: list[list[str]]) -> None:
        pass

    def _initial_state(self) -> EnvState:
        raise NotImplementedError

    def _apply_rules(self, s: EnvState) -> np.ndarray:
        raise NotImplementedError


class SyncEnv(GridGame):
    """Both agents must land on the two goal corners in the same step.

    The episode ends as soon as any agent reaches ``(0, 0)`` or
    ``(H-1, W-1)``; the reward is paid only if the two corners are covered
    by different agents at that moment.
    """

    name = "sync"
    n_actions = 5
    default_reward = 100.0

    def __init__(self, size: int = 5, **kwargs):
        super().__init__(size, **kwargs)
        self.goals = (GridPos(0, 0), GridPos(self.height - 1, self.width - 1))

    @property
    def obs_dim(self) -> int:
        return 4

    def split_index(self):
        return np.array([0, 1]), np.array([2, 3])

    def best_return(self) -> float:
        return self.reward if self.cooperative else 2 * self.reward

    def observe(self, agent_id: int) -> np.ndarray:
        me = self.state.agent_positions[agent_id]
        other = self.state.agent_positions[1 - agent_id]
        return np.array(self._pos(me) + self._pos(other))

    def _initial_state(self) -> EnvState:
        return EnvState(agent_positions=self._sample_cells(2, set(self.goals)))

    def _apply_rules(self, s):
        rewards = np.zeros(2)
        p0, p1 = s.agent_positions
        if p0 in self.goals or p1 in self.goals:
            s.terminal = True
            if {p0, p1} == set(self.goals):
                rewards += self.reward
        return rewards

    def _paint(self, grid):
        for g in self.goals:
            grid[g.row][g.col] = " G "


class WarehouseEnv(GridGame):
    """Ferry boxes from two corner shelves to the centre cell.

    One box is live at a time. An agent without a box picks up the live box
    by standing on its cell after a move; a carrying agent delivers by
    standing on the centre cell. Each delivery pays the reward constant and
    the next box appears on the opposite shelf. The episode ends after
    ``boxes`` deliveries.
    """

    name = "warehouse"
    n_actions = 4
    default_reward = 10.0

    def __init__(self, size: int = 7, boxes: int = 4, **kwargs):
        super().__init__(size, **kwargs)
        if boxes < 1:
            raise ConfigError("warehouse needs at least one box")
        self.boxes = int(boxes)
        self.shelves = (GridPos(0, 0), GridPos(self.height - 1, self.width - 1))
        self.center = GridPos(self.height // 2, self.width // 2)
        if self.center in self.shelves:
            raise ConfigError(f"{self.height}x{self.width} warehouse has no free centre cell")

    @property
    def obs_dim(self) -> int:
        return 8

    def split_index(self):
        return np.array([0, 1, 2, 6, 7]), np.array([3, 4, 5])

    def best_return(self) -> float:
        return self.boxes * self.reward

    def observe(self, agent_id: int) -> np.ndarray:
        s = self.state
        me, other = agent_id, 1 - agent_id
        box = self._pos(s.box_pos) if s.box_pos is not None else [0.0, 0.0]
        return np.array(
            self._pos(s.agent_positions[me])
            + [float(s.carrying[me])]
            + self._pos(s.agent_positions[other])
            + [float(s.carrying[other])]
            + box
        )

    def _initial_state(self) -> EnvState:
        shelf = int(self.rng.integers(2))
        box = self.shelves[shelf]
        return EnvState(
            agent_positions=self._sample_cells(2, {box}),
            carrying=[False, False],
            box_pos=box,
            box_shelf=shelf,
        )

    def _apply_rules(self, s):
        rewards = np.zeros(2)
        if s.box_pos is not None:
            for i, p in enumerate(s.agent_positions):
                if not s.carrying[i] and p == s.box_pos:
                    s.carrying[i] = True
                    s.box_pos = None
                    break
        for i, p in enumerate(s.agent_positions):
            if s.carrying[i] and p == self.center:
                s.carrying[i] = False
                s.boxes_delivered += 1
                self._credit(rewards, i, self.reward)
                if s.boxes_delivered >= self.boxes:
                    s.terminal = True
                else:
                    s.box_shelf = 1 - s.box_shelf
                    s.box_pos = self.shelves[s.box_shelf]
        return rewards

    def _paint(self, grid):
        grid[self.center.row][self.center.col] = " C "
        if self.state.box_pos is not None:
            b = self.state.box_pos
            grid[b.row][b.col] = " B "


class PredatorPreyEnv(GridGame):
    """Two predators chase randomly moving prey around optional barriers.

    A prey is captured when it shares a cell with a predator after both have
    moved; captured prey leave the board and the episode ends when none are
    left. Prey pick uniformly among their legal moves (staying put only when
    boxed in).
    """

    name = "predator_prey"
    n_actions = 4
    default_reward = 10.0

    def __init__(self, size: int = 5, prey: int = 2, barriers: Sequence[Sequence[int]] = (), **kwargs):
        super().__init__(size, **kwargs)
        if prey < 1:
            raise ConfigError("predator_prey needs at least one prey")
        self.n_prey = int(prey)
        self.barriers = frozenset(GridPos(int(r), int(c)) for r, c in barriers)
        for b in self.barriers:
            if not (0 <= b.row < self.height and 0 <= b.col < self.width):
                raise ConfigError(f"barrier {tuple(b)} lies outside the board")

    @property
    def obs_dim(self) -> int:
        return 4 + 3 * self.n_prey

    def split_index(self):
        other = np.array([2, 3])
        own = np.array([i for i in range(self.obs_dim) if i not in (2, 3)])
        return own, other

    def best_return(self) -> float:
        return self.n_prey * self.reward

    def observe(self, agent_id: int) -> np.ndarray:
        s = self.state
        vals = self._pos(s.agent_positions[agent_id]) + self._pos(s.agent_positions[1 - agent_id])
        for p in s.prey_positions:
            vals += [0.0, 0.0, 0.0] if p is None else self._pos(p) + [1.0]
        return np.array(vals)

    def _blocked(self, row, col):
        return GridPos(row, col) in self.barriers

    def _initial_state(self) -> EnvState:
        cells = self._sample_cells(2 + self.n_prey, set(self.barriers))
        return EnvState(agent_positions=cells[:2], prey_positions=list(cells[2:]), barriers=self.barriers)

    def _apply_rules(self, s):
        moved = []
        for p in s.prey_positions:
            if p is None:
                moved.append(None)
                continue
            options = [q for a in range(4) if (q := self._move(p, a)) != p]
            moved.append(options[self.rng.integers(len(options))] if options else p)
        s.prey_positions = moved

        rewards = np.zeros(2)
        for k, p in enumerate(s.prey_positions):
            if p is None:
                continue
            for i, a in enumerate(s.agent_positions):
                if a == p:
                    s.prey_positions[k] = None
                    self._credit(rewards, i, self.reward)
                    break
        if all(p is None for p in s.prey_positions):
            s.terminal = True
        return rewards

    def _paint(self, grid):
        for b in self.barriers:
            grid[b.row][b.col] = " # "
        for p in self.state.prey_positions:
            if p is not None:
                grid[p.row][p.col] = " p "


ENVIRONMENTS = {
    "sync": SyncEnv,
    "warehouse": WarehouseEnv,
    "predator_prey": PredatorPreyEnv,
}


def make_env(name: str, **params) -> GridGame:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(
            f"environment.name: unknown environment {name!r} (choose from {sorted(ENVIRONMENTS)})"
        ) from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"environment: {exc}") from None
