class PilotWaveError(Exception):
    """Base class for all library errors."""


class NonconvergenceError(PilotWaveError):
    """A series did not meet its truncation criterion within the term budget."""


class PoleError(PilotWaveError):
    """Evaluation at a pole of the Gamma function."""


class StateError(PilotWaveError, ValueError):
    """Invalid eigenstate or superposition specification."""


class NodeError(PilotWaveError):
    """Velocity requested at (or numerically too close to) a node of psi."""

    def __init__(self, message, ybar=None, t=None, log_psi_sq=None):
        super().__init__(message)
        self.ybar = ybar
        self.t = t
        self.log_psi_sq = log_psi_sq


class StepFailure(PilotWaveError):
    """The trajectory integrator could not make progress."""

    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = y


class EmptySupportError(PilotWaveError, ValueError):
    pass


class SupportViolation(PilotWaveError):
    """Density mass found where the equilibrium density vanishes."""


class ConfigError(PilotWaveError, ValueError):
    pass
