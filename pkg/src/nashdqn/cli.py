"""Command line entry point: ``nashdqn train | eval | render``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import yaml

from nashdqn.agents import AlgorithmKind, NashRules, act
from nashdqn.config import RunConfig
from nashdqn.errors import ConfigError, UsageError
from nashdqn.harness import build_env, evaluate, load_run_checkpoint, run_training


def _load(path: Path):
    try:
        return load_run_checkpoint(path)
    except OSError:
        raise
    except Exception as exc:  # zip, JSON and key errors all mean the same thing here
        raise ConfigError(f"{path}: not a readable checkpoint ({type(exc).__name__})") from None


def _train(args) -> int:
    config = RunConfig.from_file(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.updates is not None:
        config = config.replace(total_updates=args.updates)
    out = Path(args.out) if args.out else Path("runs") / f"{config.env}-{config.algorithm}-s{config.seed}"
    result = run_training(config, out)
    last = result.reports[-1]
    print(f"trained {config.algorithm} on {config.env}: {last.updates_so_far} updates, "
          f"final mean reward {last.mean_reward:.2f} ± {last.reward_sd:.2f}; results in {out}")
    return 0


def _eval(args) -> int:
    config, actors, meta = _load(args.checkpoint)
    r = evaluate(config, actors, args.episodes, seed=args.seed, epsilon=args.epsilon,
                 updates_so_far=int(meta.get("updates", 0)))
    summary = {
        "checkpoint": str(args.checkpoint),
        "episodes": r.episodes,
        "mean_reward": r.mean_reward,
        "reward_sd": r.reward_sd,
        "mean_steps": r.mean_steps,
        "mean_max_q": r.mean_max_q,
    }
    if r.deliveries_per_episode is not None:
        summary["deliveries_per_episode"] = r.deliveries_per_episode
    print(yaml.safe_dump(summary, sort_keys=False), end="")
    return 0


def _render(args) -> int:
    config = RunConfig.from_file(args.config)
    trained, actors, _ = _load(args.checkpoint)
    kind = AlgorithmKind.from_config(config.algorithm, config.nash_public)
    rules = NashRules(config.tie_break, config.no_nash, config.nash_tol)
    env = build_env(config, test=True, seed=args.seed)
    if (config.algorithm, env.obs_dim) != (trained.algorithm, actors[0].in_dim):
        raise ConfigError(
            f"{args.config}: checkpoint holds a {trained.algorithm} network for {trained.env}, "
            f"which does not fit {config.algorithm} on this {config.env} board"
        )
    rng = np.random.default_rng(args.seed)
    obs = env.reset()
    total = 0.0
    print(f"step 0\n{env.render()}\n")
    for step in range(1, config.max_test_episode_length + 1):
        joint = act(kind, obs, actors, args.epsilon, rng, env.n_actions, rules)
        res = env.step(joint)
        total += env.team_reward(res.rewards)
        obs = res.next_obs
        print(f"step {step}  actions {joint}  reward {env.team_reward(res.rewards):g}\n{env.render()}\n")
        if args.delay:
            time.sleep(args.delay)
        if res.terminal:
            break
    print(f"episode return {total:g} after {env.state.step_count} steps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nashdqn", description="Train and inspect two-agent DQN controllers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a YAML config")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory (default runs/<env>-<algorithm>-s<seed>)")
    p.add_argument("--updates", type=int, help="override total_updates")
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, help="evaluation epsilon (default from the run config)")
    p.set_defaults(func=_eval)

    p = sub.add_parser("render", help="print an ASCII rollout of a checkpoint")
    p.add_argument("--config", required=True, type=Path, help="run config describing the board to play on")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--delay", type=float, default=0.0, help="seconds to pause between frames")
    p.set_defaults(func=_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    # exp overflow inside the float32 logistic saturates to the right limit
    warnings.filterwarnings("ignore", "overflow encountered in exp", RuntimeWarning)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"nashdqn: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"nashdqn: error: {exc.strerror or exc} {name}".rstrip(), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
