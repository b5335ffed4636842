"""Exception types shared across the package.

``kind`` drives the process exit code of the command-line client:
"config" maps to exit 2, "numeric" to exit 3.
"""


class LtcError(Exception):
    kind = "config"


# --- data ingestion ---------------------------------------------------------

class MissingFile(LtcError):
    pass


class MalformedFile(LtcError):
    pass


class ZeroVariance(LtcError):
    """A variable is constant over all samples and timesteps."""


class MissingLabels(LtcError):
    pass


class InvalidStream(LtcError):
    """Stream parameters are inconsistent with the dataset."""


# --- numerics ---------------------------------------------------------------

class ShapeMismatch(LtcError):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class LengthMismatch(ShapeMismatch):
    pass


class NonFiniteValue(LtcError):
    kind = "numeric"


class NonFiniteLoss(NonFiniteValue):
    """Training diverged; the caller should lower the learning rate."""


class StaleCache(LtcError):
    """Backward pass invoked without a matching forward pass."""


class InvalidLength(LtcError):
    """Series length incompatible with the encoder's two pooling stages."""


class TooFewSamples(LtcError):
    pass


class DegenerateColumn(LtcError):
    pass


class DegenerateCentroids(LtcError):
    """Centroid rows are not pairwise distinct."""


class DomainError(LtcError):
    pass


# --- model pool -------------------------------------------------------------

class EmptyPool(LtcError):
    """No entry to evaluate; the caller must train a first model."""


class MissingCheckpoint(LtcError):
    pass


class DiskWriteFailure(LtcError):
    pass


class ConfigError(LtcError):
    pass
