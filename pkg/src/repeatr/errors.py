"""Exception hierarchy shared by every module.

Two branches: :class:`ValidationError` covers defects in user-supplied
input (files, configs, arguments) and :class:`ComputeError` covers
conditions detected during estimation itself.  The command line maps the
former to exit code 1 and the latter to exit code 2.
"""

from __future__ import annotations


class RepeatrError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RepeatrError):
    """Invalid input: data file, configuration, or argument."""


class ComputeError(RepeatrError):
    """A computation could not be carried out on otherwise valid input."""


# --- panel / file validation -------------------------------------------------

class MissingCell(ValidationError):
    """A (subject, session) cell expected by the balanced layout is absent."""

    def __init__(self, subject: str, session: str):
        self.subject = subject
        self.session = session
        super().__init__(f"missing cell for subject {subject!r}, session {session!r}")


class DuplicateCell(ValidationError):
    """A (subject, session) cell appears more than once."""

    def __init__(self, subject: str, session: str):
        self.subject = subject
        self.session = session
        super().__init__(f"duplicate cell for subject {subject!r}, session {session!r}")


class NonFiniteValue(ValidationError):
    """A feature value is NaN, infinite, or not parseable as a number."""

    def __init__(self, subject: str, session: str, feature: int, raw: object = None):
        self.subject = subject
        self.session = session
        self.feature = feature
        self.raw = raw
        shown = f" (got {raw!r})" if raw is not None else ""
        super().__init__(
            f"non-finite value for subject {subject!r}, session {session!r}, "
            f"feature f{feature}{shown}"
        )


class RaggedRow(ValidationError):
    """A data row does not match the header layout."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class TooFewSubjects(ValidationError):
    """Fewer than two subjects."""

    def __init__(self, n: int):
        self.n = n
        super().__init__(f"need at least 2 subjects, got {n}")


class TooFewSessions(ValidationError):
    """Fewer than two sessions."""

    def __init__(self, s: int):
        self.s = s
        super().__init__(f"need at least 2 sessions, got {s}")


# --- argument / shape validation ----------------------------------------------

class ShapeError(ValidationError):
    """Array input has the wrong shape for the requested operation."""


class DimensionError(ValidationError):
    """Feature dimension incompatible with the requested statistic."""


class DimensionTooSmall(DimensionError):
    """Feature dimension below the minimum the metric requires."""


class ConstantVector(ValidationError):
    """A measurement vector has zero variance across features."""

    def __init__(self, subject: str, session: str):
        self.subject = subject
        self.session = session
        super().__init__(
            f"constant vector for subject {subject!r}, session {session!r}: "
            "correlation distance undefined"
        )


class SameSession(ValidationError):
    """A session pair statistic was asked for a single session."""


class DomainError(ValidationError):
    """Scalar argument outside the mathematical domain of a map."""


class ConfigError(ValidationError):
    """Scenario or experiment configuration is inconsistent."""


class NotPositiveDefinite(ValidationError):
    """A covariance argument is not (semi)definite where required."""


# --- compute-time failures ----------------------------------------------------

class DegenerateData(ComputeError):
    """The data carry no variance to estimate from."""


class RankDeficient(ComputeError):
    """Pooled covariance has no usable leading component."""


class EigenFailure(ComputeError):
    """An eigendecomposition did not converge."""
