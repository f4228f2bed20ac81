"""Exception types raised across the package."""


class CensetError(Exception):
    """Base class for all package errors."""


class InvalidDataset(CensetError, ValueError):
    pass


class MalformedRow(InvalidDataset):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NoUncensoredCalibration(CensetError):
    """Every calibration subject is censored, so no score can be computed."""


class DegenerateKernel(CensetError):
    """All raw kernel values vanished for a query point."""


class DegenerateDesign(CensetError):
    """The weighted quantile-regression design is rank deficient."""


class DimensionMismatch(CensetError, ValueError):
    pass


class EmptyPredictionSet(CensetError):
    """No candidate time has a p-value above the miscoverage level."""
