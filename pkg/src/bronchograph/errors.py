"""Exception types shared across the package."""


class BronchographError(Exception):
    """Base class for all package-specific errors."""


class MalformedHeader(BronchographError):
    """Volume header is missing fields or cannot be parsed."""


class DimsMismatch(BronchographError):
    """Declared dimensions do not match the payload or a paired volume."""


class UnsupportedEncoding(BronchographError):
    """File declares an encoding or layout outside the supported subset."""


class IoFailure(BronchographError):
    """Read or write to disk failed."""


class EmptyMask(BronchographError):
    """Operation requires at least one foreground voxel."""


class RootNotForeground(BronchographError):
    """Requested root voxel is not foreground in the mask."""


class UnknownLabelId(BronchographError):
    """Label volume contains an id absent from the codebook."""


class GraphMismatch(BronchographError):
    """Two labeled graphs do not share the same underlying tree."""


class ProbOutOfRange(BronchographError):
    """Probability volume contains values outside [0, 1]."""


class ZeroLengthBranch(BronchographError):
    """Branch has a single voxel; orientation features are undefined."""


class SpecOverlap(BronchographError):
    """Phantom branches overlap outside their junction regions."""


class OutOfBounds(BronchographError):
    """Phantom geometry does not fit inside the requested volume."""


class TooFewCases(BronchographError):
    """Reference statistics need at least two control cases."""


class DegenerateApex(BronchographError):
    """Cone apex coincides with a leaf position."""
