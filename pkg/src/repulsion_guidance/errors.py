class GuidanceError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class InvalidParametersError(GuidanceError, ValueError):
    exit_code = 2


class SimulationError(GuidanceError):
    exit_code = 3


class DegenerateSeparationError(SimulationError):
    def __init__(self, t, r, state=None):
        self.t = t
        self.r = r
        self.state = state
        super().__init__(f"agent separation {r:.3e} fell below the floor at t={t:.6g}")


class NonFiniteStateError(SimulationError):
    def __init__(self, t, state=None):
        self.t = t
        self.state = state
        super().__init__(f"non-finite state at t={t:.6g}")


class NoCrossingError(GuidanceError, ValueError):
    pass


class ShootingError(GuidanceError):
    exit_code = 4


class BracketError(ShootingError):
    pass


class MaxIterationsError(ShootingError):
    pass


class TargetUnreachableError(ShootingError):
    pass


class NoAdmissibleWindowError(ShootingError):
    pass


class InsufficientOscillationsError(GuidanceError, ValueError):
    pass
