"""Seeded training loop, evaluation and result files."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from nashdqn.agents import AlgorithmKind, ExplorationSchedule, NashRules, act, greedy_joint, td_targets
from nashdqn.config import RunConfig
from nashdqn.envs import GridGame, make_env
from nashdqn.qnet import (
    NetworkParams,
    adam_init,
    adam_step,
    backward,
    init_params,
    load_checkpoint,
    Gradients,
    save_checkpoint,
    snapshot_params,
)
from nashdqn.replay import ReplayBuffer, Topology, TopologyKind, disseminate

log = logging.getLogger(__name__)

CSV_COLUMNS = ["updates", "mean_reward", "reward_sd", "mean_steps", "mean_max_q"]


@dataclass
class EvalReport:
    mean_reward: float
    reward_sd: float
    mean_steps: float
    mean_max_q: float
    updates_so_far: int
    episodes: int
    deliveries_per_episode: float | None = None
    agent_returns: np.ndarray | None = field(default=None, repr=False)
    """Per-episode, per-agent returns, shape ``(episodes, 2)``."""


@dataclass
class TrainingResult:
    reports: list[EvalReport]
    learners: list[NetworkParams]
    config: RunConfig
    checkpoint: Path | None = None


def build_env(config: RunConfig, *, test: bool = False, seed=None) -> GridGame:
    return make_env(config.env, seed=seed, **config.env_params(test=test))


def init_learner(config: RunConfig, env: GridGame, kind: AlgorithmKind, rng) -> NetworkParams:
    return init_params(
        config.architecture,
        env.obs_dim,
        kind.output_dim(env.n_actions),
        hidden=tuple(config.hidden),
        upscale=config.upscale,
        split_index=env.split_index() if config.architecture == "split" else None,
        rng=rng,
        dtype=config.precision,
    )


def acting_params(kind: AlgorithmKind, learners: Sequence[NetworkParams]) -> list[NetworkParams]:
    """Per-agent acting networks from the learner list (one shared learner is used by both)."""
    if kind is AlgorithmKind.SET_CONTROLLER:
        return [learners[0]]
    return [learners[0], learners[-1]]


# -- evaluation -----------------------------------------------------------

def evaluate(
    config: RunConfig,
    params: Sequence[NetworkParams] | None,
    episodes: int | None = None,
    seed=None,
    *,
    epsilon: float | None = None,
    policy: Callable[[GridGame], Sequence[int]] | None = None,
    updates_so_far: int = 0,
) -> EvalReport:
    """Roll out ``episodes`` episodes with random restarts; no learning happens.

    All episodes run side by side so each step needs one batched forward
    pass per network. ``policy`` replaces the networks with a scripted
    controller ``policy(env) -> (a0, a1)``; exploration is then disabled.
    """
    episodes = config.number_of_episodes_for_evaluation if episodes is None else episodes
    epsilon = config.eval_epsilon if epsilon is None else epsilon
    kind = AlgorithmKind.from_config(config.algorithm, config.nash_public)
    rules = NashRules(config.tie_break, config.no_nash, config.nash_tol)
    rng = np.random.default_rng(seed)
    envs = [build_env(config, test=True, seed=0) for _ in range(episodes)]
    obs = []
    for e in envs:
        e.rng = rng
        obs.append(e.reset())
    n_act = envs[0].n_actions if envs else 0

    returns = np.zeros((episodes, 2))
    steps = np.zeros(episodes, dtype=int)
    q_sum, q_count = 0.0, 0
    active = list(range(episodes))
    while active:
        if policy is not None:
            joint = np.array([policy(envs[k]) for k in active], dtype=int)
        else:
            batch = [np.array([obs[k][i] for k in active]) for i in range(2)]
            joint, qs = greedy_joint(kind, batch, params, rules)
            joint = joint.copy()
            b = len(active)
            if epsilon > 0:
                if kind.joint:
                    explore = rng.random(b) < epsilon
                    rand = rng.integers(n_act * n_act, size=b)
                    joint[explore, 0] = rand[explore] // n_act
                    joint[explore, 1] = rand[explore] % n_act
                else:
                    explore = rng.random((b, 2)) < epsilon
                    rand = rng.integers(n_act, size=(b, 2))
                    joint[explore] = rand[explore]
            rows = np.arange(b)
            for i, q in enumerate(qs):
                chosen = joint[:, 0] * n_act + joint[:, 1] if kind.joint else joint[:, i]
                q_sum += float(q[rows, chosen].sum())
                q_count += b
        still = []
        for k, a in zip(active, joint):
            res = envs[k].step((int(a[0]), int(a[1])))
            returns[k] += res.rewards
            steps[k] += 1
            obs[k] = res.next_obs
            if not res.terminal:
                still.append(k)
        active = still

    scores = returns[:, 0] if config.cooperative else returns.sum(axis=1)
    deliveries = None
    if config.env == "warehouse":
        deliveries = float(np.mean([e.state.boxes_delivered for e in envs])) if envs else 0.0
    return EvalReport(
        mean_reward=float(scores.mean()) if episodes else 0.0,
        reward_sd=float(scores.std()) if episodes else 0.0,
        mean_steps=float(steps.mean()) if episodes else 0.0,
        mean_max_q=q_sum / q_count if q_count else math.nan,
        updates_so_far=updates_so_far,
        episodes=episodes,
        deliveries_per_episode=deliveries,
        agent_returns=returns,
    )


# -- training -------------------------------------------------------------

class Trainer:
    """Holds all mutable state of one training run.

    One environment is stepped in a single loop. Every
    ``model_update_frequency`` steps after burn-in, each learner takes one
    gradient step; that counts as one update. Target copies (and, for the
    ``async_single`` topology, the agents' acting copies) are refreshed every
    ``target_dissemination_freq`` updates.
    """

    def __init__(self, config: RunConfig):
        self.config = c = config
        self.kind = AlgorithmKind.from_config(c.algorithm, c.nash_public)
        self.rules = NashRules(c.tie_break, c.no_nash, c.nash_tol)
        self.topology = Topology.from_config(c.topology, c.target_dissemination_freq)
        self.schedule = ExplorationSchedule(
            c.initial_exploration, c.final_exploration, c.exploration_decay_factor, c.total_updates
        )
        env_seed, act_seed, sample_seed, init_seed, self.eval_seed = np.random.SeedSequence(c.seed).spawn(5)
        self.env = build_env(c, seed=env_seed)
        self.act_rng = np.random.default_rng(act_seed)
        self.sample_rng = np.random.default_rng(sample_seed)
        init_rng = np.random.default_rng(init_seed)

        self.shared = self.kind.n_networks == 1 or self.topology.kind is TopologyKind.ASYNC_SINGLE
        n_learners = 1 if self.shared else 2
        self.learners = [init_learner(c, self.env, self.kind, init_rng) for _ in range(n_learners)]
        self.optims = [
            adam_init(p, lr=c.learning_rate, decay=c.learning_rate_decay) for p in self.learners
        ]
        self.targets = [snapshot_params(p) for p in self.learners]
        self.grads = [Gradients(p) for p in self.learners]
        self.buffers = [
            ReplayBuffer(self.env.obs_dim, c.experience_replay_buffer_size, c.experience_replay_burn_in)
            for _ in self.learners
        ]
        if self.topology.kind is TopologyKind.ASYNC_SINGLE:
            self.actors = [snapshot_params(self.learners[0]) for _ in range(self.kind.n_networks)]
        else:
            self.actors = acting_params(self.kind, self.learners)
        self.updates = 0
        self.steps = 0
        self.episodes = 0
        self.obs = self.env.reset()
        self.last_loss = math.nan

    # transitions ------------------------------------------------------
    def _store(self, obs, joint, rewards, next_obs, done):
        kind, n = self.kind, self.env.n_actions
        jidx = joint[0] * n + joint[1]
        if kind is AlgorithmKind.SET_CONTROLLER:
            team = self.env.team_reward(rewards)
            self.buffers[0].push(obs[0], jidx, team, next_obs[0], done)
            return
        writers = (0,) if (self.shared and self.config.single_writer) else (0, 1)
        for i in writers:
            buf = self.buffers[0 if self.shared else i]
            if kind is AlgorithmKind.IDQN:
                buf.push(obs[i], joint[i], rewards[i], next_obs[i], done)
            else:
                buf.push(obs[0], jidx, rewards[i], next_obs[0], done)

    def _learn(self):
        c = self.config
        for i, (learner, opt, buf, g) in enumerate(zip(self.learners, self.optims, self.buffers, self.grads)):
            batch = buf.sample(c.batch_size, self.sample_rng)
            if self.shared:
                targets_list, agent_id = [self.targets[0], self.targets[0]], 0
            else:
                targets_list, agent_id = self.targets, i
            y = td_targets(self.kind, batch.rewards, batch.terminals, batch.next_obs, targets_list,
                           c.discount_factor, agent_id, self.rules)
            self.last_loss, _ = backward(learner, batch.obs, batch.actions, y, g)
            adam_step(learner, opt, g)
        self.updates += 1
        if self.updates % self.topology.dissemination_freq == 0:
            self.targets = [snapshot_params(p) for p in self.learners]
            if self.topology.kind is TopologyKind.ASYNC_SINGLE:
                self.actors = disseminate(self.topology, self.learners[0], self.updates, self.actors)

    def env_step(self) -> bool:
        """Act, store and (maybe) learn for one environment step. Returns True if an update happened."""
        eps = self.schedule.epsilon_at(self.updates)
        joint = act(self.kind, self.obs, self.actors, eps, self.act_rng, self.env.n_actions, self.rules)
        res = self.env.step(joint)
        done = res.terminal and not res.truncated
        self._store(self.obs, joint, res.rewards, res.next_obs, done)
        self.steps += 1
        if res.terminal:
            self.episodes += 1
            self.obs = self.env.reset()
        else:
            self.obs = res.next_obs
        if self.steps % self.config.model_update_frequency == 0 and all(b.ready for b in self.buffers):
            self._learn()
            return True
        return False

    def evaluate(self, episodes: int | None = None) -> EvalReport:
        seed = self.eval_seed.spawn(1)[0]
        return evaluate(self.config, self.actors, episodes, seed, updates_so_far=self.updates)


def run_training(
    config: RunConfig,
    out_dir=None,
    *,
    until: Callable[[EvalReport], bool] | None = None,
    on_report: Callable[[EvalReport], None] | None = None,
) -> TrainingResult:
    """Train until ``config.total_updates`` updates (or until ``until(report)`` is true).

    Evaluates before training and every ``evaluation_frequency`` updates.
    With ``out_dir`` the CSV and summary are rewritten after every
    evaluation and a final checkpoint is saved.
    """
    c = config
    trainer = Trainer(c)
    reports: list[EvalReport] = []

    def record(report):
        reports.append(report)
        log.info(
            "updates=%d reward=%.2f±%.2f steps=%.1f q=%.2f eps=%.3f",
            report.updates_so_far, report.mean_reward, report.reward_sd, report.mean_steps,
            report.mean_max_q, trainer.schedule.epsilon_at(trainer.updates),
        )
        if on_report is not None:
            on_report(report)
        if out_dir is not None:
            emit_results(reports, out_dir, c)
        return until is not None and until(report)

    stop = record(trainer.evaluate())
    while not stop and trainer.updates < c.total_updates:
        if trainer.env_step() and trainer.updates % c.evaluation_frequency == 0:
            stop = record(trainer.evaluate())

    result = TrainingResult(reports, trainer.learners, c)
    if out_dir is not None:
        result.checkpoint = save_run_checkpoint(Path(out_dir) / "checkpoint.npz", trainer)
    return result


def save_run_checkpoint(path, trainer: Trainer) -> Path:
    nets = {f"learner{i}": p for i, p in enumerate(trainer.learners)}
    meta = {"config": trainer.config.to_dict(), "updates": trainer.updates, "steps": trainer.steps}
    return save_checkpoint(path, nets, meta)


def load_run_checkpoint(path) -> tuple[RunConfig, list[NetworkParams], dict]:
    nets, meta = load_checkpoint(path)
    config = RunConfig.from_dict(meta["config"])
    learners = [nets[f"learner{i}"] for i in range(len(nets))]
    kind = AlgorithmKind.from_config(config.algorithm, config.nash_public)
    return config, acting_params(kind, learners), meta


# -- result files ---------------------------------------------------------

def convergence_point(reports: Sequence[EvalReport], threshold: float, window: int) -> int | None:
    """Index of the first evaluation whose trailing ``window``-mean exceeds ``threshold``."""
    rewards = [r.mean_reward for r in reports]
    for k in range(window - 1, len(rewards)):
        if np.mean(rewards[k - window + 1: k + 1]) > threshold:
            return k
    return None


def emit_results(reports: Sequence[EvalReport], path, config: RunConfig | None = None) -> tuple[Path, Path]:
    """Write ``results.csv`` and ``summary.yaml`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    warehouse = (config is not None and config.env == "warehouse") or any(
        r.deliveries_per_episode is not None for r in reports
    )
    columns = CSV_COLUMNS + (["deliveries_per_episode"] if warehouse else [])
    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in reports:
            row = [r.updates_so_far, r.mean_reward, r.reward_sd, r.mean_steps, r.mean_max_q]
            if warehouse:
                row.append(r.deliveries_per_episode)
            w.writerow(row)

    summary: dict = {"evaluations": len(reports)}
    if config is not None:
        best = build_env(config).best_return()
        threshold = config.convergence_fraction * best
        k = convergence_point(reports, threshold, config.convergence_window)
        summary["convergence"] = {
            "threshold": threshold,
            "window": config.convergence_window,
            "evaluation_index": "n/a" if k is None else k,
            "updates": "n/a" if k is None else reports[k].updates_so_far,
        }
        summary["config"] = config.to_dict()
    if reports:
        last = max(reports, key=lambda r: r.updates_so_far)
        best_report = max(reports, key=lambda r: r.mean_reward)
        summary["final"] = _report_dict(last)
        summary["best"] = _report_dict(best_report)
    summary_path = out / "summary.yaml"
    summary_path.write_text(yaml.safe_dump(summary, sort_keys=False))
    return csv_path, summary_path


def _report_dict(r: EvalReport) -> dict:
    d = asdict(r)
    d.pop("agent_returns")
    return {k: (None if v is None else (v if isinstance(v, int) else float(v))) for k, v in d.items()}
