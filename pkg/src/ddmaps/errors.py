"""Exception and warning types raised across the package."""


class DDMapsError(Exception):
    """Base class for all errors raised by ddmaps."""


class InvalidData(DDMapsError, ValueError):
    """Input data is malformed or contains non-finite values."""


class InvalidConfig(DDMapsError, ValueError):
    """A hyperparameter or option is out of its admissible range."""


class NumericalDegeneracy(DDMapsError, ArithmeticError):
    """A normalization or eigensolve cannot be carried out."""


class OutOfSampleTooFar(DDMapsError):
    """All kernel weights of a query point underflow; the point is far from the data."""


class UnsupportedNormalization(DDMapsError):
    """The requested operation is only defined for ``alpha == 0`` models."""


class LeftManifold(DDMapsError):
    """A latent query fell outside the tabulated region or into a masked cell."""


class GridCoverageError(DDMapsError):
    """Too many grid nodes could not be lifted."""


class InsufficientSampling(DDMapsError):
    """Sampling produced fewer points than required."""


class UnstableStep(DDMapsError, ArithmeticError):
    """An explicit time integration blew up."""


class IllConditionedWarning(UserWarning):
    """Kernel eigenvalues decayed below the usable range; modes were truncated."""


class NoReductionWarning(UserWarning):
    """More latent coordinates were selected than ambient dimensions."""
