"""Exception types raised by the prosogest package."""


class ProsogestError(Exception):
    """Base class for all package-specific errors."""


# --- file ingestion ---

class UnsupportedFormat(ProsogestError):
    """Audio file is not 16-bit PCM RIFF/WAVE."""


class CorruptHeader(ProsogestError):
    """Audio file header cannot be parsed."""


class EmptyAudio(ProsogestError):
    """Audio file is shorter than the minimum usable duration."""


class NonMonotonicTime(ProsogestError):
    """Trajectory timestamps are not strictly increasing."""


class NonUniformRate(ProsogestError):
    """Trajectory frame spacing jitter exceeds tolerance."""


class MalformedRow(ProsogestError):
    """Trajectory CSV row (or header) cannot be parsed."""


# --- pitch ---

class AudioTooShort(ProsogestError):
    """Audio shorter than two analysis windows."""


# --- prominence ---

class TooFewSamples(ProsogestError):
    """Gradient extraction needs at least three samples."""


class DegenerateDimension(ProsogestError):
    """A feature dimension has zero variance."""


class InsufficientData(ProsogestError):
    """Not enough rows to fit the requested model."""


class DimensionMismatch(ProsogestError):
    """Vector dimension does not match the model dimension."""


class NoPositiveLabels(ProsogestError):
    """Threshold calibration requires at least one positive label."""


# --- kinematics ---

class TooFewFrames(ProsogestError):
    """Trajectory has too few frames to differentiate."""


class EmptyInterval(ProsogestError):
    """Requested interval contains no frames."""


# --- gesture HMMs ---

class InsufficientExamples(ProsogestError):
    """Too few training sequences for a phoneme class."""


class SequenceTooShort(ProsogestError):
    """A training sequence is shorter than the number of states."""


# --- co-occurrence ---

class InsufficientClassData(ProsogestError):
    """A phoneme class present in the data has too few samples.

    The offending class name is stored in ``class_name``.
    """

    def __init__(self, class_name, message=None):
        self.class_name = str(class_name)
        super().__init__(message or f"insufficient samples for class {self.class_name}")


# --- synthetic corpus ---

class InvalidRecipe(ProsogestError):
    """Synthetic corpus recipe fails validation."""


# --- pipeline / CLI ---

class ConfigError(ProsogestError):
    """Pipeline configuration file is missing or invalid."""


class MissingModels(ProsogestError):
    """Model directory does not contain the required model files."""
