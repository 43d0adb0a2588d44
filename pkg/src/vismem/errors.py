"""Exception hierarchy for the visual-memory engine.

Every error raised by the library derives from VismemError so callers
(notably the CLI) can map library failures to a single exit path.
"""


class VismemError(Exception):
    """Base class for all vismem errors."""


class ZeroVector(VismemError):
    """Vector norm below the normalization threshold."""


class NonFinite(VismemError):
    """Vector contains NaN or Inf components."""


class DimMismatch(VismemError):
    """Operands disagree on vector dimensionality."""


class FormatError(VismemError):
    """On-disk pack or index data is malformed."""


class DuplicateId(VismemError):
    """Entry id already present in the memory."""


class UnknownId(VismemError):
    """Entry id not present in the memory."""


class EmptyMemory(VismemError):
    """Operation requires a non-empty memory."""


class StaleIndex(VismemError):
    """Index was built against a different memory generation."""


class StaleReport(VismemError):
    """Reliability report was computed against a different memory generation."""


class InvalidThreshold(VismemError):
    """Hard-prune threshold would not leave a usable memory."""


class EmptyNeighborSet(VismemError):
    """Classification requires at least one neighbor."""


class EmptySample(VismemError):
    """Statistical test requires non-empty samples."""


class EmptyCandidate(VismemError):
    """Taxonomy node has no examples in memory."""


class NoChildren(VismemError):
    """Taxonomy descent reached a node with no children above leaf depth."""


class DegenerateFit(VismemError):
    """Least-squares fit is underdetermined (all abscissae equal)."""


class DegenerateResidual(VismemError):
    """Residual vector is numerically zero (query coincides with its nearest neighbor)."""


class InvalidSpec(VismemError):
    """Fixture-generator parameters are out of range."""
