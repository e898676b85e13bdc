"""Exception types shared across the package."""


class InvalidCutoffError(ValueError):
    """Fock cutoff below the minimum of 2."""


class ShapeError(ValueError):
    """Array / gate / layer dimensions do not line up."""


class InvalidModesError(ValueError):
    """Mode indices out of range or not distinct."""


class DegenerateStateError(ValueError):
    """Operation undefined on a zero-norm state."""


class EncodingRangeError(ValueError):
    """Encoding amplitude outside the calibrated [0, a_max] domain."""


class CalibrationError(RuntimeError):
    """No amplitude bound satisfies the requested norm floor."""


class ConfigurationError(ValueError):
    """Bad run / noise / sweep configuration."""


class NumericalError(RuntimeError):
    """Non-finite value encountered; message names the offending quantity."""


class CheckpointNotFoundError(FileNotFoundError):
    """Referenced run checkpoint does not exist."""
