"""Exception hierarchy shared by all stages of the link simulation."""


class PcsQkdError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(PcsQkdError, ValueError):
    pass


class TruncationError(PcsQkdError):
    """The Fock-space truncation cannot meet the requested tolerance."""


class DimensionMismatchError(PcsQkdError, ValueError):
    pass


class AliasingError(PcsQkdError, ValueError):
    pass


class CalibrationError(PcsQkdError):
    pass


class SyncError(PcsQkdError):
    """No preamble found with an acceptable peak-to-sidelobe ratio."""


class EqualizerDivergenceError(PcsQkdError):
    pass


class CFOEstimationError(PcsQkdError):
    pass


class AlignmentError(PcsQkdError):
    """Sent and received symbol blocks are not correlated."""


class CovarianceError(PcsQkdError, ValueError):
    """Unphysical parameter set: a symplectic eigenvalue fell below 1."""


class ConfigError(PcsQkdError, ValueError):
    pass
