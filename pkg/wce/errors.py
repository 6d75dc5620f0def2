"""
Exception hierarchy. Everything derives from RuntimeError so entry points can
catch a work unit's failure the same way for solver and algebra errors.
"""


class WCEError(RuntimeError):
    pass


class DomainError(WCEError):
    """Multiindex arithmetic outside its domain (e.g. beta not <= alpha)."""


class RangeError(WCEError):
    pass


class MissingSampleError(WCEError):
    pass


class DimensionMismatch(WCEError):
    pass


class QuadratureError(WCEError):
    pass


class DependencyViolation(WCEError):
    """A source term read a coefficient outside the lower-triangular past."""


class EmptyInput(WCEError):
    pass


class OverflowGuard(WCEError):
    pass


class ConfigError(WCEError):
    pass


class CFLViolation(WCEError):
    def __init__(self, dt: float, suggested_dt: float):
        super(CFLViolation, self).__init__(
            "time step {:.3e} violates the CFL bound, try dt <= {:.3e}".format(dt, suggested_dt)
        )
        self.dt = dt
        self.suggested_dt = suggested_dt


class BlowupDetected(WCEError):
    def __init__(self, time: float, sup_norm: float, guard: float):
        super(BlowupDetected, self).__init__(
            "sup-norm {:.3e} exceeded the guard {:.3e} at t={:.6f}".format(sup_norm, guard, time)
        )
        self.time = time
        self.sup_norm = sup_norm
        self.guard = guard


class SolverError(WCEError):
    """Stepper failure annotated with the coefficient and time it happened at."""

    def __init__(self, alpha, time: float, cause: Exception):
        super(SolverError, self).__init__(
            "solver failed for coefficient {} at t={:.6f}: {}".format(alpha, time, cause)
        )
        self.alpha = alpha
        self.time = time
        self.cause = cause
