"""Exception types shared across the package."""


class ScribbleGateError(Exception):
    """Base class for all package errors."""


class ZeroSpread(ScribbleGateError):
    """Normalization asked for on data with zero spread (constant input)."""


class TooFewSubjects(ScribbleGateError):
    """A dataset split would leave some group empty."""


class EmptyMask(ScribbleGateError):
    """An operation needs at least one foreground pixel."""


class EmptyScribble(ScribbleGateError):
    """A supervised loss got a scribble with no annotated pixel."""


class ShapeMismatch(ScribbleGateError):
    """Array shapes disagree."""


class IndivisibleShape(ScribbleGateError):
    """Spatial size not divisible by the required power of two."""


class ZeroWeight(ScribbleGateError):
    """Spectral normalization of an all-zero weight."""


class EmptyBatch(ScribbleGateError):
    """A loss got an empty score batch."""


class NoUnpairedMasks(ScribbleGateError):
    """The adversarial phase has no mask pool to draw from."""


class TooFewPairs(ScribbleGateError):
    """Wilcoxon test needs at least 5 nonzero paired differences."""


class AllZeroDifferences(ScribbleGateError):
    """Wilcoxon test on identical samples."""


class ConfigError(ScribbleGateError):
    """Unknown or malformed configuration key/value."""


class BadCheckpoint(ScribbleGateError):
    """Checkpoint archive missing, corrupt, or from an unknown format version."""
