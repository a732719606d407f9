class ConfigError(ValueError):
    """A run configuration or environment setup is invalid."""


class UsageError(RuntimeError):
    """An operation was called in a state that does not allow it."""


class BurnInError(UsageError):
    """Replay sampling was requested before the buffer reached burn-in."""
