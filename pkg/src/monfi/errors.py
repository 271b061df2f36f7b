"""Exceptions shared across the package."""


class NumericalGuardError(RuntimeError):
    """A numerical safety guard tripped (result would be unreliable)."""


class StepSizeError(NumericalGuardError):
    """Time step too large for the requested stochastic or deterministic update."""
