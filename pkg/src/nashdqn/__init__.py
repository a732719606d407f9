"""Multi-agent deep Q-learning on cooperative gridworld games.

Everything needed for training lives in this package: numpy Q-networks with
hand-written backprop and Adam, pure-strategy Nash selection over Q-value
payoff matrices, replay buffers, and a seeded training harness.
"""

from nashdqn.errors import BurnInError, ConfigError, UsageError

__version__ = "0.1.0"

__all__ = ["BurnInError", "ConfigError", "UsageError", "__version__"]
