"""Exception types shared across the engine.

The CLI maps these onto exit codes: ConfigError -> 2, TransportError -> 3,
anything else raised by the modules -> 4.
"""


class ConfigError(ValueError):
    """Invalid run configuration or command-line arguments."""


class TransportError(RuntimeError):
    """Failure talking to an external model server (after retries)."""


class ScorerResponseError(RuntimeError):
    """Model server replied, but the payload violates the scoring contract."""
