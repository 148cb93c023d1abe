"""Exception hierarchy shared by every MaxStable Lab module."""

from __future__ import annotations

from typing import Any, Optional


class MaxStableError(Exception):
    """Base class; the CLI turns any subclass into exit code 1."""


class IngestError(MaxStableError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(MaxStableError):
    pass


class ProjectionError(MaxStableError):
    pass


class NumericalError(MaxStableError):
    def __init__(self, message: str, draw: Any = None):
        self.draw = draw
        super().__init__(message)


class DomainError(MaxStableError):
    pass


class BoundsError(MaxStableError):
    pass


class DegenerateError(MaxStableError):
    pass


class InitializationError(MaxStableError):
    def __init__(self, message: str, stage: Optional[str] = None):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}" if stage else message)


class OptimizationError(MaxStableError):
    pass


class TICError(MaxStableError):
    def __init__(self, message: str, condition_number: float = float("inf")):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number {condition_number:.3e})")


class BootstrapError(MaxStableError):
    pass


class MarginFitError(MaxStableError):
    def __init__(self, message: str, site_id: Optional[str] = None):
        self.site_id = site_id
        super().__init__(f"site {site_id}: {message}" if site_id is not None else message)


class InsufficientDataError(MaxStableError):
    pass


class SimulationError(MaxStableError):
    pass


class ResourceError(MaxStableError):
    pass
