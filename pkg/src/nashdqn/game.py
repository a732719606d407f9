"""Joint-action selection from Q-values treated as bimatrix-game payoffs.

Joint-space Q-vectors are laid out agent-0 major, so the entry for joint
action ``(i, j)`` sits at index ``i * n + j``. Reshaping gives one payoff
matrix per agent with agent 0 choosing rows and agent 1 choosing columns.

Every function here accepts either a single game or a stack of games with
arbitrary leading batch dimensions; training evaluates 128 next-states at
once. Ties are always broken towards the lowest (lexicographic) index.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from nashdqn.errors import ConfigError, UsageError

TIE_RULES = ("greedy", "max_sum")
NO_NASH_RULES = ("greedy", "best_sum")


class PayoffMatrixPair(NamedTuple):
    payoff_1: np.ndarray
    payoff_2: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.payoff_1.shape[-2:]


def _side(length: int) -> int:
    n = int(round(np.sqrt(length)))
    if n * n != length:
        raise UsageError(f"joint Q-vector of length {length} is not a square action space")
    return n


def build_payoffs(q1, q2, n_actions: int | None = None) -> PayoffMatrixPair:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if q1.shape != q2.shape:
        raise UsageError(f"payoff vectors differ in shape: {q1.shape} vs {q2.shape}")
    n = _side(q1.shape[-1]) if n_actions is None else n_actions
    if n * n != q1.shape[-1]:
        raise UsageError(f"expected {n * n} joint Q-values, got {q1.shape[-1]}")
    shape = q1.shape[:-1] + (n, n)
    return PayoffMatrixPair(q1.reshape(shape), q2.reshape(shape))


def nash_mask(pair: PayoffMatrixPair, tol: float = 0.0) -> np.ndarray:
    """Boolean array marking cells that are mutual best responses.

    Agent 0's best responses are the column-wise maxima of its matrix (it
    picks the row), agent 1's the row-wise maxima of its own. With
    ``tol == 0`` a cell must equal the maximum exactly.
    """
    p1, p2 = pair
    if p1.shape != p2.shape:
        raise UsageError(f"payoff matrices differ in shape: {p1.shape} vs {p2.shape}")
    best1 = p1.max(axis=-2, keepdims=True)
    best2 = p2.max(axis=-1, keepdims=True)
    if tol == 0.0:
        return (p1 == best1) & (p2 == best2)
    return (p1 >= best1 - tol) & (p2 >= best2 - tol)


def pure_nash(pair: PayoffMatrixPair, tol: float = 0.0) -> list[tuple[int, int]]:
    """Pure-strategy equilibria of a single game, sorted lexicographically."""
    mask = nash_mask(pair, tol)
    if mask.ndim != 2:
        raise UsageError("pure_nash() takes a single game; use nash_mask() for batches")
    return [(int(i), int(j)) for i, j in np.argwhere(mask)]


def _flat_argmax(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = scores.shape[-1]
    flat = scores.reshape(scores.shape[:-2] + (-1,)).argmax(axis=-1)
    return flat // n, flat % n


def check_rules(tie_rule: str, no_nash_rule: str) -> None:
    if tie_rule not in TIE_RULES:
        raise ConfigError(f"nash_q.tie_break: unknown rule {tie_rule!r} (choose from {TIE_RULES})")
    if no_nash_rule not in NO_NASH_RULES:
        raise ConfigError(f"nash_q.no_nash: unknown rule {no_nash_rule!r} (choose from {NO_NASH_RULES})")


def select_nash_actions(pair: PayoffMatrixPair, tie_rule: str = "max_sum",
                        no_nash_rule: str = "greedy", tol: float = 0.0) -> np.ndarray:
    """Both agents' actions under the given rules, shape ``(..., 2)``.

    Each agent applies the rules on its own: under ``greedy`` tie-breaking
    the two may take coordinates from different equilibria, so the result
    is not necessarily an equilibrium.
    """
    check_rules(tie_rule, no_nash_rule)
    p1, p2 = pair
    mask = nash_mask(pair, tol)
    has_eq = mask.any(axis=(-2, -1))

    if tie_rule == "max_sum":
        row, col = _flat_argmax(np.where(mask, p1 + p2, -np.inf))
        eq0, eq1 = row, col
    else:
        eq0, _ = _flat_argmax(np.where(mask, p1, -np.inf))
        _, eq1 = _flat_argmax(np.where(mask, p2, -np.inf))

    if no_nash_rule == "greedy":
        fb0, _ = _flat_argmax(p1)
        _, fb1 = _flat_argmax(p2)
    else:
        fb0 = p1.mean(axis=-1).argmax(axis=-1)
        fb1 = p2.mean(axis=-2).argmax(axis=-1)

    a0 = np.where(has_eq, eq0, fb0)
    a1 = np.where(has_eq, eq1, fb1)
    return np.stack([a0, a1], axis=-1)


def select_nash_q(pair: PayoffMatrixPair, tie_rule: str, no_nash_rule: str, agent_id: int,
                  tol: float = 0.0) -> int:
    """The action ``agent_id`` plays in a single game."""
    if agent_id not in (0, 1):
        raise UsageError(f"agent_id must be 0 or 1, got {agent_id}")
    return int(select_nash_actions(pair, tie_rule, no_nash_rule, tol)[..., agent_id])


def select_friend(q_self, agent_id: int):
    """Friend-Q: play your coordinate of the best cell of your own joint Q-values."""
    q_self = np.asarray(q_self, dtype=float)
    n = _side(q_self.shape[-1])
    best = q_self.argmax(axis=-1)
    coord = best // n if agent_id == 0 else best % n
    return int(coord) if np.ndim(coord) == 0 else coord


def select_set_controller(q_joint) -> tuple[int, int]:
    q_joint = np.asarray(q_joint, dtype=float)
    n = _side(q_joint.shape[-1])
    best = q_joint.argmax(axis=-1)
    if np.ndim(best) == 0:
        return int(best // n), int(best % n)
    return np.stack([best // n, best % n], axis=-1)
