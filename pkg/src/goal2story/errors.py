"""Exception taxonomy shared across the package."""

from __future__ import annotations


class Goal2StoryError(Exception):
    """Base class for every error raised by this package."""


class InvariantError(Goal2StoryError, ValueError):
    """A domain value violates one of its construction invariants."""


class SchemaError(Goal2StoryError, ValueError):
    """JSON input does not match the expected record schema.

    ``field`` names the first missing/mistyped field (dotted path);
    ``record_index`` is set when the error occurred while loading a dataset.
    """

    def __init__(self, message: str, field: str | None = None, record_index: int | None = None):
        super().__init__(message)
        self.field = field
        self.record_index = record_index


class TemplateError(Goal2StoryError):
    """A prompt template asset is missing or malformed."""


class GatewayError(Goal2StoryError):
    """Base class for backend/transport failures."""


class TransportError(GatewayError):
    """Transient transport failure (timeout, connection reset, 5xx)."""


class AuthError(GatewayError):
    """Authentication rejected by the backend. Never retried."""


class RequestRejectedError(GatewayError):
    """Backend rejected the request with a non-auth 4xx. Never retried."""


class ResponseShapeError(GatewayError):
    """Backend answered, but the payload is missing expected content."""


class ScriptMismatchError(GatewayError):
    """A scripted backend received a request no fixture entry matches."""


class FleetError(Goal2StoryError):
    """Base class for agent pipeline failures."""


class StageMismatchError(FleetError):
    """RefInfo path does not match the agent stage being prompted."""


class FormatDoctorError(FleetError):
    """All repair attempts produced unparseable JSON.

    ``attempts`` holds every text that failed to parse, original first.
    """

    def __init__(self, message: str, attempts: list[str]):
        super().__init__(message)
        self.attempts = attempts


class AgentOutputError(FleetError):
    """Agent output parsed as JSON but violates its output contract."""


class ExpandError(FleetError):
    """An impact-map expansion failed part-way.

    ``partial_tree`` holds everything generated before the failure;
    ``__cause__`` carries the underlying error.
    """

    def __init__(self, message: str, partial_tree=None):
        super().__init__(message)
        self.partial_tree = partial_tree


class JudgeFormatError(Goal2StoryError):
    """Judge output could not be normalized into a verdict."""


class EvalError(Goal2StoryError):
    """Metric computation received inconsistent inputs."""


class DatasetError(Goal2StoryError):
    """Dataset file-level failure (unreadable, empty, wrong container)."""


class ExtractionError(DatasetError):
    """A raw issue record could not be turned into a valid dataset record.

    ``raw_text`` retains the model output for manual triage.
    """

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class ConfigError(Goal2StoryError):
    """CLI configuration is missing or inconsistent."""
