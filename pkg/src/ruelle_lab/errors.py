"""Exception types shared across the package."""


class RuelleLabError(Exception):
    """Base class for errors raised by ruelle_lab."""


class ConfigError(RuelleLabError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class NumericalFailure(RuelleLabError, ArithmeticError):
    """A numerical routine could not deliver a trustworthy answer."""


class ConvergenceError(NumericalFailure, ValueError):
    """Evaluation requested outside the region where a series converges."""
