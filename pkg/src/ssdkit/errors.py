"""Exception hierarchy shared across the toolkit.

Every deliberate failure raises a PipelineError subclass carrying the
process exit code the CLI maps it to: 2 for validation/parameter
problems, 3 for numeric blow-ups. Plain OSError is left alone and maps
to exit code 1 at the CLI boundary.
"""
from __future__ import annotations


class PipelineError(Exception):
    exit_code = 2


class AudioDecodeError(PipelineError):
    """Malformed or truncated audio container."""


class UnsupportedFormatError(AudioDecodeError):
    """Well-formed container, but a codec we do not handle."""


class EmptyAudioError(AudioDecodeError):
    """Zero-length data payload."""


class ParameterError(PipelineError):
    """An argument violates an operation's precondition."""


class ValidationError(PipelineError):
    """Manifest row, config value, or plan constraint rejected."""


class ConfigurationError(PipelineError):
    """A configuration is internally inconsistent (e.g. filterbank too dense)."""


class DegenerateInputError(PipelineError):
    """Input is structurally valid but carries no usable information."""


class NumericError(PipelineError):
    exit_code = 3
