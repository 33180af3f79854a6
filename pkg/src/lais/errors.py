"""Exception hierarchy shared across the package."""


class LaisError(Exception):
    """Base class for all package errors."""


class NumericalFailure(LaisError):
    """A numerical routine could not produce a valid result."""


class NotPositiveDefinite(NumericalFailure):
    """Cholesky factorization met a non-positive pivot."""


class RankDeficient(NumericalFailure):
    """A column collapsed during orthonormalization."""


class NoConvergence(NumericalFailure):
    """An iterative method hit its iteration cap.

    ``residuals`` carries the best residual estimates reached, if any.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class LineSearchFailure(NumericalFailure):
    pass


class CurvatureViolation(NumericalFailure):
    """Second-order sufficiency fails: some 1 - lambda*lambda_i <= 0."""


class NotRare(NumericalFailure):
    """The origin already lies in the failure set, F(0) >= z."""


class SolverFailure(NumericalFailure):
    """Linear solve in a forward model failed."""


class NoFailureSamples(LaisError):
    """No weighted failure samples are available for a CE update."""


class IncompatibleConfigs(LaisError):
    """Result files cannot be aggregated together."""


class ConfigError(LaisError):
    """Invalid experiment configuration."""
