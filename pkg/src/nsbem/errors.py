"""Exception types shared across the solver."""


class NsbemError(Exception):
    """Base class for all solver errors."""


class MeshError(NsbemError):
    """Invalid mesh topology or geometry."""


class FieldError(NsbemError):
    """Desingularizing field cannot be constructed or evaluated."""


class AssemblyError(NsbemError):
    """Collocation system cannot be assembled."""


class SingularSystemError(NsbemError):
    """Dense system is singular (or numerically so)."""

    def __init__(self, pivot_index: int, hint: str):
        self.pivot_index = pivot_index
        self.hint = hint
        super().__init__(f"singular matrix at pivot {pivot_index}: {hint}")


class NearBoundaryError(NsbemError):
    """Probe too close to the boundary for the conventional evaluator."""


class ConfigError(NsbemError):
    """Run configuration is invalid."""
