"""Exception hierarchy shared by all fracwave modules."""


class FracwaveError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FracwaveError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class AssemblyError(FracwaveError):
    """Quadrature failed to reach the requested accuracy during assembly."""


class NumericalError(FracwaveError):
    """A numerical routine (eigensolver, linear solve) failed."""


class ContractError(FracwaveError, ValueError):
    """Input violates a structural contract (e.g. a control that is not a test function)."""


class RegularizationRequiredError(NumericalError):
    """A least-squares system is rank deficient and no regularization was given."""
