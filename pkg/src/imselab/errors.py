"""Exception types shared across the package.

Every error the library raises deliberately derives from ImselabError so the
CLI can map failure classes to distinct exit codes.
"""


class ImselabError(Exception):
    """Base class for all errors raised by imselab."""


class NonFiniteInput(ImselabError, ValueError):
    """An input array contains NaN or Inf."""


class DegenerateRange(ImselabError, ValueError):
    """A (lo, hi) intensity range with lo >= hi."""


class ShapeMismatch(ImselabError, ValueError):
    """Two arrays that must share a shape do not."""


class BadRange(ImselabError, ValueError):
    """A sampling range is inverted or out of its allowed domain."""


class InvalidSpec(ImselabError, ValueError):
    """A remap spec violates its invariants."""


class BadConfig(ImselabError, ValueError):
    """A configuration value or key is invalid."""


class EmptyDataset(ImselabError, ValueError):
    """A training routine received no data."""


class DivergedTraining(ImselabError, RuntimeError):
    """Training loss became NaN or Inf."""


class NonFiniteLoss(ImselabError, RuntimeError):
    """An optimization loss became NaN or Inf."""


class BothEmpty(ImselabError, ValueError):
    """Dice is undefined when both masks are empty."""


class EmptyMask(ImselabError, ValueError):
    """A boundary-distance metric received an empty mask."""


class EmptyRegion(ImselabError, ValueError):
    """The mask union over which a score is computed is empty."""


class DegenerateScores(ImselabError, ValueError):
    """Correlation is undefined when all scores are identical."""
