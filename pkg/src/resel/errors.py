"""Exception taxonomy shared across the package.

Validation failures map to CLI exit code 1, runtime failures to exit
code 2 (transport, persistence, and other environment problems).
"""


class ReselError(Exception):
    """Base class for all package errors."""


class ValidationFailure(ReselError):
    """Bad inputs, bad configuration, or violated invariants."""


class RuntimeFailure(ReselError):
    """Transport, persistence, or other environment failures."""


# ---------------------------------------------------------------- validation


class MenuError(ValidationFailure):
    """A resolution menu violates one of its construction rules."""


class EmptyGroundTruth(ValidationFailure):
    """A metric was asked to score against zero ground truths."""


class LengthMismatch(ValidationFailure):
    """A utility vector does not match the menu length."""


class DimensionMismatch(ValidationFailure):
    """A feature vector does not match the head's expected dimension."""


class InconsistentDimensions(ValidationFailure):
    """Training features do not share a single dimension."""


class EmptyDataset(ValidationFailure):
    """Training was invoked with no samples."""


class EmptySupportedSet(ValidationFailure):
    """Rounding was asked against an empty supported-size list."""


class NonpositiveBaseline(ValidationFailure):
    """Relative savings need a strictly positive baseline."""


class EmptyEvaluation(ValidationFailure):
    """A report was requested over zero evaluation records."""


class BadMix(ValidationFailure):
    """A threshold mix does not form a probability distribution over the menu."""


class DecodeError(ValidationFailure):
    """Image bytes could not be decoded."""


class DuplicateId(ValidationFailure):
    """A sample id was appended twice to the same store."""


class UnknownSample(ValidationFailure):
    """The simulated VLM has no entry for the requested sample id."""


class SchemaError(ValidationFailure):
    """A stored record does not match the JSONL schema."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigError(ValidationFailure):
    """A configuration file failed validation."""


# ------------------------------------------------------------------- runtime


class StoreError(RuntimeFailure):
    """Persistence failed (I/O)."""


class FeatureServiceError(RuntimeFailure):
    """The feature endpoint was unreachable or returned garbage."""


class VlmError(RuntimeFailure):
    """Base class for downstream-VLM failures."""


class VlmTransportError(VlmError):
    """Connection-level failure after the configured retries."""


class VlmProtocolError(VlmError):
    """The endpoint answered, but not with a parsable chat completion."""


class VlmAuthError(VlmError):
    """The endpoint rejected our credentials."""


class VlmTimeoutError(VlmError):
    """The request exceeded the configured timeout after retries."""
