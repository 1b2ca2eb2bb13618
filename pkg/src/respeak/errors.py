"""Exception hierarchy and CLI exit codes.

Every failure the toolkit can produce maps onto one of four exit codes so
batch scripts can branch on the kind of failure without parsing messages:
2 usage, 3 data, 4 checkpoint, 5 network.
"""

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4
EXIT_NETWORK = 5


class RespeakError(Exception):
    """Base class for all toolkit errors."""

    exit_code = EXIT_DATA


class AudioFormatError(RespeakError):
    """Malformed RIFF/WAVE container."""


class UnsupportedFormatError(AudioFormatError):
    """Valid WAV, but not PCM-16 mono."""


class SizeError(RespeakError):
    """Input too short for the requested analysis."""


class ShapeError(RespeakError):
    """Tensor shape mismatch; message carries both shapes."""


class ContractError(RespeakError):
    """An operation was called outside its contract (missing phase,
    non-scalar loss, missing gradient, ...)."""


class ManifestError(RespeakError):
    """Malformed or inconsistent corpus manifest; message carries line numbers."""


class CheckpointError(RespeakError):
    """Corrupt, truncated, or architecture-incompatible checkpoint."""

    exit_code = EXIT_CHECKPOINT


class TransportError(RespeakError):
    """HTTP recognizer transport failure (non-2xx, timeout, bad payload)."""

    exit_code = EXIT_NETWORK


class EvaluationError(RespeakError):
    """Evaluation could not complete; partial results are never reported."""


class ConfigError(RespeakError):
    """Malformed config file or out-of-range value."""
