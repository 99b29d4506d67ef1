from typing import Optional


class HDGError(Exception):
    """Base class for all solver errors"""


class ConfigurationError(HDGError, ValueError):
    """Invalid run configuration, mesh parameters or level stack"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SingularLocalProblemError(HDGError):
    """The element-local saddle system could not be factorized"""

    def __init__(self, element: int, tau: float):
        self.element = element
        self.tau = tau
        super().__init__(
            f"local problem on element {element} is singular (tau={tau:.6g}); "
            "check the stabilization parameter or the element geometry"
        )


class SingularLevelError(HDGError):
    """Direct factorization of a level operator failed"""

    def __init__(self, level: Optional[int] = None, detail: str = ""):
        self.level = level
        where = f"level {level}" if level is not None else "matrix"
        super().__init__(f"direct factorization of {where} failed {detail}".strip())


class NumericalError(HDGError, ArithmeticError):
    """NaN/Inf produced by an operator application"""

    def __init__(self, message: str, level: Optional[int] = None, index: Optional[int] = None):
        self.level = level
        self.index = index
        if level is not None:
            message = f"{message} (level {level})"
        super().__init__(message)


class PoleError(HDGError, ZeroDivisionError):
    """A closed-form symbol was evaluated at (or too close to) a pole"""

    def __init__(self, factor: str, value: complex):
        self.factor = factor
        self.value = value
        super().__init__(f"pole in closed form: |{factor}| = {abs(value):.3e}")
