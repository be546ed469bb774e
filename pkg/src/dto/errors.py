"""Exception types shared across the package."""


class DtoError(Exception):
    pass


class DomainError(DtoError, ValueError):
    """An argument lies outside the domain of the operation."""


class EmptySample(DtoError):
    pass


class DegenerateSamples(DtoError):
    pass


class NoUsableFits(DtoError):
    pass


class SingularSystem(DtoError):
    pass


class InfeasibleDepth(DtoError):
    pass


class InsufficientPersons(DtoError):
    pass


class ParseError(DtoError):
    pass


class ValidationError(DtoError):
    pass
