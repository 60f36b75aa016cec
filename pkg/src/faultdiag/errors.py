"""Exception hierarchy shared across the package.

Three failure families map onto the CLI exit codes: configuration
problems (exit 2), data problems (exit 3), and numeric failures
(exit 4).
"""


class FaultDiagError(Exception):
    """Base class for all faultdiag errors."""


class ConfigError(FaultDiagError, ValueError):
    """Invalid configuration or parameters."""


class DataError(FaultDiagError, ValueError):
    """Input data violates a precondition or invariant."""


class NumericError(FaultDiagError, ArithmeticError):
    """A numeric procedure failed or is undefined for the input."""


class ParseError(DataError):
    """A file could not be parsed into the expected format."""


# -- features ---------------------------------------------------------------

class ZeroVarianceError(DataError):
    """All values identical where spread is required."""


class EmptyBandError(DataError):
    """No spectrum bin falls inside the requested frequency band."""


class ChannelMismatchError(DataError):
    """Observations disagree on their channel sets."""


class UnknownLabelError(DataError):
    """A label is missing from the declared category list."""


# -- distance ---------------------------------------------------------------

class NegativeInputError(DataError):
    """Metric requires non-negative data."""


# -- cluster ----------------------------------------------------------------

class KTooLargeError(DataError):
    """Requested more clusters than there are samples."""


class DegenerateComponentError(NumericError):
    """A mixture component collapsed despite regularization retries."""


class DimensionMismatchError(DataError):
    """Feature dimension differs from the fitted model's."""


class SingleClusterError(DataError):
    """Silhouette needs at least two distinct clusters."""


class TooFewPointsError(DataError):
    """Not enough points on the curve to locate a knee."""


# -- ordination -------------------------------------------------------------

class TooFewSamplesError(DataError):
    """Operation needs more samples than were given."""


# -- hypotest ---------------------------------------------------------------

class InvalidParamsError(ConfigError):
    """Distribution parameters out of range."""


class SampleTooSmallError(DataError):
    """Sample below the test's minimum size."""


class SampleTooLargeError(DataError):
    """Sample above the test's validity range."""


class ZeroRangeError(DataError):
    """All sample values identical; test statistic undefined."""


class ZeroTotalVariationError(DataError):
    """Total sum of squared dissimilarities is zero."""


class SingleGroupError(DataError):
    """Test needs at least two groups."""


class ZeroResidualError(NumericError):
    """Within-group variation is zero; F is undefined."""


# -- datagen ----------------------------------------------------------------

class AliasError(ConfigError):
    """Sampling rate too low for the requested harmonic content."""


# -- plotting ---------------------------------------------------------------

class MissingSectionError(FaultDiagError, KeyError):
    """The report lacks the section a plot needs."""
