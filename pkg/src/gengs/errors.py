"""Exception types raised across the package."""


class ParameterDomainError(ValueError):
    """A distribution parameter lies outside its valid domain."""


class NotTruncatableError(ValueError):
    """The distribution cannot be truncated in the requested way."""


class TailTooHeavyError(ValueError):
    """No truncation level within the cap reaches the tail tolerance."""


class DomainError(ValueError):
    """An autodiff primitive was evaluated outside its domain."""

    def __init__(self, message, node_id=None):
        if node_id is not None:
            message = f"{message} (node {node_id})"
        super().__init__(message)
        self.node_id = node_id


class UnsupportedOperationError(TypeError):
    """The tape has no differentiable rule for the requested operation."""


class InfiniteDivergenceError(ValueError):
    """KL divergence is infinite because q puts mass where p has none."""


class ConfigError(ValueError):
    """An experiment configuration is invalid or inconsistent."""
