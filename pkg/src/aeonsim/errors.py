"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (matrices, germ constraints, files)."""


class ProtocolError(RuntimeError):
    """A structural requirement of a procedure failed, e.g. a generator set
    that does not close into the 24-element Clifford group."""


class DetectionError(RuntimeError):
    """Peak detection found nothing usable in a fidelity map."""


class FitError(RuntimeError):
    """A nonlinear fit failed to converge or produced unusable parameters."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class CalibrationDiverged(RuntimeError):
    """Peak tracking lost the calibration peak between stages."""

    def __init__(self, message: str, stage_index: int | None = None):
        super().__init__(message)
        self.stage_index = stage_index
