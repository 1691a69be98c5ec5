"""Exception hierarchy shared across the package."""


class SwrError(Exception):
    """Base class for all package errors."""


class ConfigError(SwrError):
    """Invalid or inconsistent configuration.

    ``problems`` holds every violated constraint, not only the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class GeometryError(SwrError):
    pass


class CompatibilityError(SwrError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ParamError(SwrError):
    pass


class DomainError(SwrError):
    pass


class QuadratureError(SwrError):
    pass


class SaturationError(SwrError):
    def __init__(self, message, supremum):
        self.supremum = supremum
        super().__init__(message)


class GridMismatch(SwrError):
    pass


class RangeError(SwrError):
    pass


class InsufficientData(SwrError):
    pass
