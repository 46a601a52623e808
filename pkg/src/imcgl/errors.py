"""Exception types shared across the package.

Kept deliberately small: one class per failure mode that callers are
expected to branch on.  Everything derives from ValueError/RuntimeError so
casual callers can still catch broadly.
"""


class GridTooSmallError(ValueError):
    """Requested mode range does not fit inside the stored coefficient cube."""


class TemporalAveragingError(ValueError):
    """Mode transform is not invertible (contraction factor too large)."""


class IntegrationBlowupError(RuntimeError):
    """Non-finite state encountered during time stepping."""

    def __init__(self, time: float, message: str | None = None):
        self.time = time
        super().__init__(message or f"non-finite state at t={time:.6g}")


class ConeAssumptionError(RuntimeError):
    """A precondition of a cone-based check failed (membership or admissibility)."""

    def __init__(self, message: str, time: float | None = None):
        self.time = time
        super().__init__(message)


class GraphConvergenceError(RuntimeError):
    """Backward-horizon ladder failed to produce a Cauchy graph value."""


class BVPSolveError(RuntimeError):
    """Shooting solver did not reach the requested residual."""


class ConfigError(ValueError):
    """Bad key/value in a run configuration file."""


class CheckpointError(ValueError):
    """Base class for field checkpoint parse failures."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointPayloadError(CheckpointError):
    pass
