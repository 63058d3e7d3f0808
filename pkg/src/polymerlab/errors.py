"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedRegimeError(ValueError):
    """The parameters fall outside the regime a formula or sampler covers."""


class DivergentMomentError(ArithmeticError):
    """A requested moment of the disorder law is infinite."""


class CostGuardError(RuntimeError):
    """The request would exceed a hard cost guard (exponential enumeration)."""
