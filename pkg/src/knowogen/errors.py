"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation/data problems are
``KnowogenError`` subclasses (exit 2), environment/I-O failures are left
to the standard ``OSError`` family (exit 1).
"""

from __future__ import annotations


class KnowogenError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(KnowogenError):
    """Base class for configuration validation failures."""


class ConfigSyntaxError(ConfigError):
    """Malformed configuration text or structurally invalid tables/keys."""


class UnknownReferenceError(ConfigError):
    """A config field points at an id that was never declared."""

    def __init__(self, reference: str, context: str = ""):
        self.reference = reference
        detail = f" ({context})" if context else ""
        super().__init__(f"unknown reference {reference!r}{detail}")


class DependencyCycleError(ConfigError):
    """Action dependencies within a task form a cycle."""

    def __init__(self, task_id: str, cycle: list[str]):
        self.task_id = task_id
        self.cycle = list(cycle)
        super().__init__(f"dependency cycle in task {task_id!r}: {self.cycle}")


class ValueOutOfRangeError(ConfigError):
    """A numeric value lies outside its documented range."""


class ExhaustionError(ConfigError):
    """More sampled participants requested than agents exist."""


class BudgetExceededError(KnowogenError):
    """The configured cap on backend calls was reached."""


class ContextOverflowError(KnowogenError):
    """Prompt exceeds the backend token limit even at one summary."""


class BackendError(KnowogenError):
    """Text-generation backend failed after bounded retries."""

    def __init__(self, message: str, status: int | None = None, body_excerpt: str = ""):
        self.status = status
        self.body_excerpt = body_excerpt
        super().__init__(message)


class BackendTimeoutError(BackendError):
    """Backend did not answer within the configured timeout."""


class EmptyCompletionError(BackendError):
    """Backend answered with an empty completion."""


class NonEmptyDirError(KnowogenError):
    """Dataset output directory already contains files."""


class RatingsParseError(KnowogenError):
    """A ratings CSV row could not be parsed."""

    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class EmptyGroupError(KnowogenError):
    """No rating records exist for the requested origin."""


class SupportError(KnowogenError):
    """KL divergence undefined: p has mass where q has none."""
