"""Exception types shared across the package.

The split matters for the CLI exit-code contract: configuration problems
exit with 2, numerical divergence with 3.
"""


class RingRCError(Exception):
    """Base class for all package errors.

    ``stage`` is filled in by the experiment runner so a failure deep in
    the pipeline still names the step that produced it.
    """

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class ValidationError(RingRCError, ValueError):
    """Invalid parameters, configuration, or input shapes."""


class TimingError(ValidationError):
    """Symbol/chip/step timing that does not divide evenly."""


class DivergenceError(RingRCError, RuntimeError):
    """The integrator produced a non-finite or unphysically large state."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ReseedRequiredError(RingRCError, RuntimeError):
    """A generated target sequence diverged; pick a different seed."""


class RankDeficiencyError(RingRCError, RuntimeError):
    """Unregularized normal equations are singular."""


class AllPointsFailedError(RingRCError, RuntimeError):
    """Every grid point of a sweep failed; no best point exists."""
