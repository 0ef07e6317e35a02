"""Exception hierarchy shared across the simulator."""


class OpuError(Exception):
    """Base class for every error raised by homodyne_opu."""


class DomainError(OpuError, ValueError):
    """Non-finite or otherwise inadmissible numeric input."""


class ShapeError(OpuError, ValueError):
    """Operand dimensions do not agree."""


class RangeError(OpuError, ValueError):
    """A value lies outside the range a device stage accepts (e.g. an unscaled vector)."""


class SaturationError(OpuError):
    """An ADC readout saturated. Raised by the compiler, which guarantees headroom."""

    def __init__(self, message, task=None):
        super().__init__(message)
        self.task = task


class FormatError(OpuError, ValueError):
    """Malformed file (OPT1 tensor, IDX dataset, model manifest)."""


class ConfigError(OpuError, ValueError):
    """Invalid or unknown configuration key/value."""


class NoiseFitError(OpuError):
    """Requested error deviation cannot be reached by the noise model.

    ``floor`` carries the deviation achieved with the knob at its limit
    (the quantization floor when the target is too small).
    """

    def __init__(self, message, floor):
        super().__init__(message)
        self.floor = floor


class CalibrationError(OpuError):
    """Calibration map unusable for the requested operation (dead units, shape)."""
