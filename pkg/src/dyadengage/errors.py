"""Exception types raised across the package.

Everything derives from DyadEngageError so the CLI can map any domain
validation failure to exit code 2.
"""


class DyadEngageError(Exception):
    """Base class for all package errors."""


# -- audio ------------------------------------------------------------------

class MalformedWav(DyadEngageError):
    """RIFF/WAVE container is structurally broken (bad magic, truncated chunk)."""


class UnsupportedFormat(DyadEngageError):
    """WAV is valid but not linear PCM, mono, 8- or 16-bit."""


class ClipTooShort(DyadEngageError):
    """Signal shorter than one analysis frame."""


class SpanOutOfRange(DyadEngageError):
    """Utterance span does not lie within the clip."""


# -- feature selection ------------------------------------------------------

class SingleClass(DyadEngageError):
    """Dataset has fewer than two classes."""


class InsufficientClassSize(DyadEngageError):
    """A class has too few rows for the requested neighbour count."""


class KTooLarge(DyadEngageError):
    """Requested more features than the dataset has."""


# -- SVM --------------------------------------------------------------------

class SingleClassInput(DyadEngageError):
    """Binary training labels are all identical."""


class NonFiniteFeature(DyadEngageError):
    """Training or query features contain NaN/inf."""


class ClassTooSmall(DyadEngageError):
    """A multiclass class has fewer than two training rows."""


class DimensionMismatch(DyadEngageError):
    """Query vector length differs from the model's raw input dimension."""


# -- HMM / coupled HMM ------------------------------------------------------

class EmptyTraining(DyadEngageError):
    """No training sequences supplied."""


class StateOutOfRange(DyadEngageError):
    """State label outside 1..n_states."""


class SymbolOutOfRange(DyadEngageError):
    """Observation symbol outside 1..n_symbols."""


class EmptyObservation(DyadEngageError):
    """Cannot decode an empty observation sequence."""


class MissingGold(DyadEngageError):
    """Supervised training step lacks a gold state."""


# -- pipeline ---------------------------------------------------------------

class NoVotes(DyadEngageError):
    """Consensus requested for an utterance with zero labeler votes."""


class NotTwoSpeakers(DyadEngageError):
    """Dialogue does not have exactly two speakers."""


class AlphabetMismatch(DyadEngageError):
    """Classifier level set and HMM observation alphabet disagree."""


class LengthMismatch(DyadEngageError):
    """Predicted and gold sequences have different lengths."""


class InvalidGeneratorConfig(DyadEngageError):
    """Synthetic corpus generator configuration fails validation."""
