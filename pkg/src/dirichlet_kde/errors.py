"""Exception hierarchy shared by the library and the command line."""


class DirichletKDEError(Exception):
    """Base class for all package errors."""


class DomainError(DirichletKDEError, ValueError):
    """An argument lies outside the domain of the operation."""


class SpecValidationError(DomainError):
    """A spiky-density specification violates one or more constraints.

    ``violations`` lists every failed constraint, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalError(DirichletKDEError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class EnvelopeError(NumericalError):
    """A rejection sampler met a density value above its envelope."""


class DegenerateFitError(DirichletKDEError, ValueError):
    """Least-squares fit is undefined for the given points."""


class ConfigError(DirichletKDEError, ValueError):
    """Invalid run configuration; carries every violated constraint."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
