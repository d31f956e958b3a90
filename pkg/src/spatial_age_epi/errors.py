"""Exception hierarchy shared by all modules."""


class EpidemicModelError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(EpidemicModelError, ValueError):
    pass


class EstimationBudgetExceeded(EpidemicModelError):
    """Monte Carlo standard-error target not reached within the sample cap."""


class KernelBoundViolation(EpidemicModelError):
    pass


class InfeasibleInitialCondition(EpidemicModelError, ValueError):
    pass


class EnvelopeViolation(EpidemicModelError):
    """Thinning acceptance probability exceeded one. Always a bug."""


class TimeOutOfRange(EpidemicModelError, ValueError):
    pass


class ContractionFailure(EpidemicModelError):
    pass


class NegativeField(EpidemicModelError):
    pass


class NegativeBoundary(NegativeField):
    pass


class ConstraintViolation(EpidemicModelError):
    pass


class NonConvergence(EpidemicModelError):
    pass


class NotApplicable(EpidemicModelError):
    pass


class ConfigError(EpidemicModelError, ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
