"""Exception hierarchy.

Input errors (bad files, bad shapes) derive from :class:`InputError`; numerical or
modelling failures derive from :class:`DomainError`. The CLI maps the former to exit
code 1 and the latter to exit code 2.
"""


class ZicsError(Exception):
    """Base class for every error raised by the package."""


class InputError(ZicsError):
    pass


class DomainError(ZicsError):
    pass


class MalformedInput(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class DuplicateSpecies(InputError):
    pass


class NonIntegerStoichiometry(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class UnresolvableDependency(DomainError):
    pass


class NonlinearDependence(DomainError):
    pass


class TotalMissing(DomainError):
    pass


class NonFiniteExponent(DomainError):
    pass


class InvalidNetwork(DomainError):
    pass


class SolverError(DomainError):
    """Newton iteration failed; ``lambdas`` holds the last iterate when available."""

    def __init__(self, message, lambdas=None):
        super().__init__(message)
        self.lambdas = lambdas


class SingularJacobian(SolverError):
    pass


class NoDescent(SolverError):
    pass


class IterLimit(SolverError):
    pass


class ReducibleChain(DomainError):
    pass


class CapExceeded(DomainError):
    pass


class NegativePropensity(DomainError):
    pass
