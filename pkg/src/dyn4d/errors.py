"""Exception types shared across the package."""


class Dyn4dError(Exception):
    """Base class for all package errors."""


class InvalidConfig(Dyn4dError):
    """A configuration value violates its documented constraints."""


class InvalidSpec(Dyn4dError):
    """A synthetic-world specification is malformed."""


class DegenerateRotation(Dyn4dError):
    """A 6D rotation encoding cannot be orthonormalized (zero or parallel vectors)."""


class DegenerateConfiguration(Dyn4dError):
    """A point/correspondence configuration is too degenerate for estimation."""


class InsufficientTracks(Dyn4dError):
    """Fewer tracks than motion bases requested."""


class EmptyCluster(Dyn4dError):
    """A k-means cluster stayed empty after the allowed rescue attempts."""


class SingularNormalEquations(Dyn4dError):
    """The closed-form fit is underdetermined for at least one channel."""


class NoConsensus(Dyn4dError):
    """RANSAC found no model with the minimum number of inliers."""


class DegenerateDenominator(Dyn4dError):
    """Sampson denominator vanished (point at both epipoles)."""


class DimensionMismatch(Dyn4dError):
    """Images or arrays with incompatible shapes."""


class FileFormatError(Dyn4dError):
    """A persisted file failed validation; message carries the field path."""
