"""Run configuration: defaults, YAML loading and validation.

A config file is YAML with a few sections; every key is optional::

    seed: 0
    total_updates: 500000
    environment: {name: sync, size: 5, cooperative: true}
    algorithm:
      kind: nash_q            # idqn | set_controller | friend | nash_q
      topology: parallel      # parallel | async_single
      nash_q: {public: true, tie_break: max_sum, no_nash: greedy}
    network: {architecture: single, hidden: [64, 64], upscale: 32}
    hyperparameters: {batch_size: 128, learning_rate: 0.01, ...}
    evaluation: {epsilon: 0.05, convergence_fraction: 0.7}

Hyperparameter keys follow the row names of the usual DQN hyperparameter
table in snake case (``Experience Replay Burn-in`` becomes
``experience_replay_burn_in``); the original spelling is accepted too.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from nashdqn.errors import ConfigError

ENV_DEFAULT_SIZE = {"sync": 5, "warehouse": 7, "predator_prey": 5}


@dataclass
class RunConfig:
    seed: int = 0
    total_updates: int = 500_000

    # environment
    env: str = "sync"
    size: int | None = None
    boxes: int = 4
    prey: int = 2
    barriers: list = field(default_factory=list)
    cooperative: bool = True
    normalize: bool = True

    # algorithm
    algorithm: str = "idqn"
    topology: str = "parallel"
    single_writer: bool = False
    nash_public: bool = True
    tie_break: str = "max_sum"
    no_nash: str = "greedy"
    nash_tol: float = 0.0

    # network
    architecture: str = "single"
    hidden: list = field(default_factory=lambda: [64, 64])
    upscale: int = 32
    precision: str = "float32"

    # hyperparameter table
    batch_size: int = 128
    experience_replay_buffer_size: int = 1_000_000
    learning_rate: float = 0.01
    reward_constant: float | None = None
    learning_rate_decay: float = 1e-4
    initial_exploration: float = 1.0
    final_exploration: float = 0.1
    exploration_decay_factor: float = 0.75
    target_dissemination_freq: int = 10_000
    discount_factor: float = 0.95
    max_training_episode_length: int = 100
    max_test_episode_length: int = 100
    number_of_episodes_for_evaluation: int = 1_000
    experience_replay_burn_in: int = 50_000
    model_update_frequency: int = 10
    evaluation_frequency: int = 10_000

    # evaluation policy and convergence bookkeeping
    eval_epsilon: float = 0.05
    convergence_fraction: float = 0.7
    convergence_window: int = 5

    def __post_init__(self):
        self.validate()

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        return cls(**_flatten(data or {}))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        """Nested form, suitable for writing back to YAML."""
        c = self
        return {
            "seed": c.seed,
            "total_updates": c.total_updates,
            "environment": {
                "name": c.env, "size": c.size, "boxes": c.boxes, "prey": c.prey,
                "barriers": [list(b) for b in c.barriers], "cooperative": c.cooperative,
                "normalize": c.normalize,
            },
            "algorithm": {
                "kind": c.algorithm, "topology": c.topology, "single_writer": c.single_writer,
                "nash_q": {"public": c.nash_public, "tie_break": c.tie_break, "no_nash": c.no_nash,
                           "tol": c.nash_tol},
            },
            "network": {"architecture": c.architecture, "hidden": list(c.hidden), "upscale": c.upscale,
                        "precision": c.precision},
            "hyperparameters": {name: getattr(c, name) for name in HYPERPARAMETERS},
            "evaluation": {
                "epsilon": c.eval_epsilon,
                "convergence_fraction": c.convergence_fraction,
                "convergence_window": c.convergence_window,
            },
        }

    # -- derived ----------------------------------------------------------
    @property
    def board_size(self) -> int:
        return ENV_DEFAULT_SIZE.get(self.env, 5) if self.size is None else self.size

    def env_params(self, *, test: bool = False) -> dict[str, Any]:
        params = dict(
            size=self.board_size,
            reward=self.reward_constant,
            cooperative=self.cooperative,
            normalize=self.normalize,
            max_steps=self.max_test_episode_length if test else self.max_training_episode_length,
        )
        if self.env == "warehouse":
            params["boxes"] = self.boxes
        elif self.env == "predator_prey":
            params["prey"] = self.prey
            params["barriers"] = [tuple(b) for b in self.barriers]
        return params

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        for f in dataclasses.fields(self):
            setattr(self, f.name, _coerce(f, getattr(self, f.name)))
        if self.env not in ENV_DEFAULT_SIZE:
            raise ConfigError(f"environment.name: unknown environment {self.env!r} "
                              f"(choose from {sorted(ENV_DEFAULT_SIZE)})")
        if self.algorithm not in ("idqn", "set_controller", "friend", "nash_q"):
            raise ConfigError(f"algorithm.kind: unknown algorithm {self.algorithm!r} "
                              "(choose from idqn, set_controller, friend, nash_q)")
        if self.topology not in ("parallel", "async_single"):
            raise ConfigError(f"algorithm.topology: unknown topology {self.topology!r} "
                              "(choose from parallel, async_single)")
        if self.tie_break not in ("greedy", "max_sum"):
            raise ConfigError(f"nash_q.tie_break: unknown rule {self.tie_break!r} (choose from greedy, max_sum)")
        if self.no_nash not in ("greedy", "best_sum"):
            raise ConfigError(f"nash_q.no_nash: unknown rule {self.no_nash!r} (choose from greedy, best_sum)")
        if self.architecture not in ("single", "split"):
            raise ConfigError(f"network.architecture: unknown architecture {self.architecture!r} "
                              "(choose from single, split)")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"network.precision: expected float32 or float64, got {self.precision!r}")
        if len(self.hidden) != 2 or any(int(h) < 1 for h in self.hidden):
            raise ConfigError("network.hidden: expected two positive layer widths")
        self.hidden = [int(h) for h in self.hidden]
        positive = ["batch_size", "experience_replay_buffer_size", "target_dissemination_freq",
                    "max_training_episode_length", "max_test_episode_length", "model_update_frequency",
                    "evaluation_frequency", "upscale", "convergence_window", "number_of_episodes_for_evaluation"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be positive, got {getattr(self, name)}")
        non_negative = ["total_updates", "experience_replay_burn_in", "learning_rate_decay", "nash_tol"]
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be non-negative, got {getattr(self, name)}")
        if self.size is not None and self.size < 2:
            raise ConfigError(f"environment.size: board must be at least 2x2, got {self.size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate: must be positive, got {self.learning_rate}")
        if not 0.0 <= self.discount_factor < 1.0:
            raise ConfigError(f"discount_factor: must lie in [0, 1), got {self.discount_factor}")
        for name in ("initial_exploration", "final_exploration", "exploration_decay_factor",
                     "eval_epsilon", "convergence_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name}: must lie in [0, 1], got {getattr(self, name)}")
        if self.final_exploration > self.initial_exploration:
            raise ConfigError("final_exploration: must not exceed initial_exploration")
        if self.experience_replay_burn_in > self.experience_replay_buffer_size:
            raise ConfigError("experience_replay_burn_in: exceeds experience_replay_buffer_size")


HYPERPARAMETERS = [
    "batch_size", "experience_replay_buffer_size", "learning_rate", "reward_constant",
    "learning_rate_decay", "initial_exploration", "final_exploration", "exploration_decay_factor",
    "target_dissemination_freq", "discount_factor", "max_training_episode_length",
    "max_test_episode_length", "number_of_episodes_for_evaluation", "experience_replay_burn_in",
    "model_update_frequency", "evaluation_frequency",
]

# (section, key) -> field
_SECTION_KEYS = {
    ("environment", "name"): "env",
    ("environment", "size"): "size",
    ("environment", "boxes"): "boxes",
    ("environment", "prey"): "prey",
    ("environment", "barriers"): "barriers",
    ("environment", "cooperative"): "cooperative",
    ("environment", "normalize"): "normalize",
    ("environment", "reward_constant"): "reward_constant",
    ("algorithm", "kind"): "algorithm",
    ("algorithm", "topology"): "topology",
    ("algorithm", "single_writer"): "single_writer",
    ("nash_q", "public"): "nash_public",
    ("nash_q", "tie_break"): "tie_break",
    ("nash_q", "no_nash"): "no_nash",
    ("nash_q", "tol"): "nash_tol",
    ("network", "architecture"): "architecture",
    ("network", "hidden"): "hidden",
    ("network", "upscale"): "upscale",
    ("network", "precision"): "precision",
    ("evaluation", "epsilon"): "eval_epsilon",
    ("evaluation", "episodes"): "number_of_episodes_for_evaluation",
    ("evaluation", "frequency"): "evaluation_frequency",
    ("evaluation", "convergence_fraction"): "convergence_fraction",
    ("evaluation", "convergence_window"): "convergence_window",
}

_HYPER_SUFFIXES = ("_epsilon", "_for_asynchronous_models")


def _norm(key: str) -> str:
    key = str(key).replace("$", "").replace("\\", "")
    return re.sub(r"[^a-z0-9]+", "_", key.lower()).strip("_")


def _hyper_field(key: str) -> str | None:
    k = _norm(key)
    for suffix in _HYPER_SUFFIXES:
        if k.endswith(suffix) and k[: -len(suffix)] in HYPERPARAMETERS:
            k = k[: -len(suffix)]
    return k if k in HYPERPARAMETERS else None


def _flatten(data: dict[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    top_level = {"seed", "total_updates", *HYPERPARAMETERS}

    def put(name, value, where):
        if name in out:
            raise ConfigError(f"{where}: duplicate setting for {name}")
        out[name] = value

    for key, value in data.items():
        section = _norm(key)
        if section in ("environment", "algorithm", "network", "evaluation", "hyperparameters"):
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a mapping")
            for sub, v in value.items():
                skey = _norm(sub)
                where = f"{key}.{sub}"
                if section == "algorithm" and skey == "nash_q":
                    if not isinstance(v, dict):
                        raise ConfigError(f"{where}: expected a mapping")
                    for nk, nv in v.items():
                        name = _SECTION_KEYS.get(("nash_q", _norm(nk)))
                        if name is None:
                            raise ConfigError(f"{where}.{nk}: unknown setting")
                        put(name, nv, f"{where}.{nk}")
                    continue
                name = _SECTION_KEYS.get((section, skey))
                if name is None and section in ("hyperparameters", "environment"):
                    name = _hyper_field(sub)
                if name is None:
                    raise ConfigError(f"{where}: unknown setting")
                put(name, v, where)
        elif section == "nash_q" and isinstance(value, dict):
            for nk, nv in value.items():
                name = _SECTION_KEYS.get(("nash_q", _norm(nk)))
                if name is None:
                    raise ConfigError(f"nash_q.{nk}: unknown setting")
                put(name, nv, f"nash_q.{nk}")
        elif section in top_level:
            put(section, value, key)
        elif (name := _hyper_field(key)) is not None:
            put(name, value, key)
        else:
            raise ConfigError(f"{key}: unknown setting")
    return out


def _coerce(f: dataclasses.Field, value):
    name = f.name
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if value is None:
            if "None" in kind:
                return None
            raise ConfigError(f"{name}: a value is required")
        if kind.startswith("bool"):
            if isinstance(value, bool):
                return value
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        if kind.startswith("int"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f"{name}: expected an integer, got {value!r}")
            return int(value)
        if kind.startswith("float"):
            if isinstance(value, bool):
                raise ConfigError(f"{name}: expected a number, got {value!r}")
            return float(value)
        if kind == "str":
            if not isinstance(value, str):
                raise ConfigError(f"{name}: expected a string, got {value!r}")
            return value
        if kind == "list":
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{name}: expected a list, got {value!r}")
            return list(value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: invalid value {value!r}") from None
    return value
