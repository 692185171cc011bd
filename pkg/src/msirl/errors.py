"""Exception hierarchy. ``exit_code`` feeds the CLI."""


class MsirlError(Exception):
    exit_code = 1


class ConfigError(MsirlError, ValueError):
    exit_code = 2


class NumericDomainError(MsirlError, ArithmeticError):
    """Non-finite evaluation or singular matrix where one must be invertible."""

    exit_code = 3


class ConvergenceError(MsirlError, RuntimeError):
    exit_code = 3

    def __init__(self, message, residual=None, diagnostics=None):
        super().__init__(message)
        self.residual = residual
        self.diagnostics = diagnostics or {}


class StructureError(MsirlError, ValueError):
    """A chain or policy is reducible where irreducibility is required."""

    exit_code = 3

    def __init__(self, message, components=None):
        super().__init__(message)
        self.components = components


class SupportError(NumericDomainError):
    pass


class DivergedError(NumericDomainError):
    def __init__(self, message, last_state=None, time=None):
        super().__init__(message)
        self.last_state = last_state
        self.time = time


class ConstructionError(MsirlError, RuntimeError):
    exit_code = 3


class ArtifactError(MsirlError, OSError):
    exit_code = 4
