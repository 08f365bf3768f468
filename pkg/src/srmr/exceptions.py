"""Exception hierarchy shared by every srmr module."""


class SRMRError(Exception):
    """Base class for all errors raised by srmr."""


class InvalidParameterError(SRMRError, ValueError):
    pass


class EmptyDataError(SRMRError, ValueError):
    pass


class EmptyLikelihoodError(SRMRError, ValueError):
    """Every row of the dataset is labelled as an outlier."""


class InsufficientDataError(SRMRError, ValueError):
    pass


class TrimTooAggressiveError(SRMRError, ValueError):
    pass


class InfeasibleKError(SRMRError, ValueError):
    """K is larger than the data can support (N < K * (p + 2))."""


class FitFailedError(SRMRError, RuntimeError):
    """All random starts of a fit failed.

    ``diagnostics`` holds one message per failed start.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class NoOutliersError(SRMRError, ValueError):
    pass


class UndefinedMetricError(SRMRError, ValueError):
    pass


class GenerationStuckError(SRMRError, RuntimeError):
    pass


class UnknownPresetError(SRMRError, KeyError):
    def __init__(self, name, valid):
        self.name = name
        self.valid = tuple(valid)
        super().__init__(f"unknown preset {name!r}; valid presets: {', '.join(self.valid)}")

    def __str__(self):
        return self.args[0]
