"""Shared exception types; the CLI maps them to exit codes."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration or command-line input (exit code 2)."""


class NumericError(RuntimeError):
    """Non-finite values or numeric breakdown during a run (exit code 3)."""


class ConvergenceError(NumericError):
    """Iterative solver ran out of iterations; carries the residual history."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []
