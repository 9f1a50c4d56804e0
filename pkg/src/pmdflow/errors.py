"""Exception types shared across the toolkit."""


class PmdflowError(Exception):
    """Base class for all toolkit errors."""


class GridValidationError(PmdflowError):
    """A grid specification violates one of its invariants."""


class ConfigValidationError(PmdflowError):
    """A case configuration violates one of its invariants."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NotConverged(PmdflowError):
    """Iterative linear solve failed to reach the residual tolerance."""

    def __init__(self, residual: float, tol: float, iterations: int):
        self.residual = residual
        self.tol = tol
        self.iterations = iterations
        super().__init__(
            f"residual {residual:.3e} above tolerance {tol:.3e} "
            f"after {iterations} iterations"
        )


class PoissonDivergence(NotConverged):
    """Pressure-Poisson solve failed its residual contract."""


class CflViolation(PmdflowError):
    """Advective CFL number reached or exceeded 1 during time stepping."""

    def __init__(self, cfl: float, t: float):
        self.cfl = cfl
        self.t = t
        super().__init__(f"CFL number {cfl:.3f} >= 1 at t = {t:.3f}")


class ConvergenceFailure(PmdflowError):
    """Dense symmetric eigensolver did not converge."""


class DegenerateMode(PmdflowError):
    """A mode with eigenvalue at or below the cutoff was requested."""


class StreamEnded(PmdflowError):
    """Solver stream ended before the snapshot plan was satisfied."""


class MissingCase(PmdflowError):
    """Regime report requested without all required case analyses."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing case analyses: " + ", ".join(self.missing))
