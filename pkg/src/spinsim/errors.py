"""Exception hierarchy shared by all modules.

``ConfigError`` maps to CLI exit status 2, ``NumericalError`` to 3.
"""


class SpinSimError(Exception):
    pass


class ConfigError(SpinSimError, ValueError):
    """Invalid user input: bad shapes, out-of-range parameters, bad config."""


class SizeCapError(ConfigError):
    pass


class PoleWindowError(ConfigError):
    """Beatnote detuning too close to a transverse mode."""


class BracketError(ConfigError):
    pass


class NumericalError(SpinSimError, RuntimeError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class NormDriftError(NumericalError):
    pass


class TrackingError(NumericalError):
    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class NotParityEigenstateError(NumericalError):
    pass


class NoCoupledStateError(NumericalError):
    pass
