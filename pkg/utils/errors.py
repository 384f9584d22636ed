"""
Exception hierarchy for VeriFi.
"""
from typing import Any, List, Optional


class VerifiError(Exception):
    """Base class for every error raised by the workbench."""


class ConfigError(VerifiError):
    """Invalid configuration value."""


class ModelError(VerifiError):
    """A model failed to parse or validate.

    Attributes:
        diagnostics: list of ``Diagnostic`` records with line/column
    """

    def __init__(self, diagnostics: List[Any]):
        self.diagnostics = list(diagnostics)
        summary = "; ".join(str(d) for d in self.diagnostics[:5])
        if len(self.diagnostics) > 5:
            summary += f" (+{len(self.diagnostics) - 5} more)"
        super().__init__(summary or "invalid model")


class ModelRuntimeError(VerifiError):
    """Evaluation error while executing a model (bad index, bound violation)."""


class ContractViolation(VerifiError):
    """An operation was called outside its precondition."""


class ScheduleError(VerifiError):
    """A resolver could not drive a run to quiescence."""


class StateSpaceExceeded(VerifiError):
    """The configured node budget was exhausted.

    Attributes:
        budget: the node limit that was hit
        partial: partial result (flagged invalid) when one is available
    """

    def __init__(self, budget: int, partial: Optional[Any] = None):
        self.budget = budget
        self.partial = partial
        super().__init__(f"state-space budget of {budget} stored states exceeded")


class PolicyCompileError(VerifiError):
    """A loss schedule entry cannot be expressed in the filter language."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"cannot compile field '{field}': {message}")


class FilterSyntaxError(VerifiError):
    """Malformed jamming filter text."""


class SessionError(VerifiError):
    """A simulated session could not complete."""
