"""Exception hierarchy shared by every stage of the harness."""

from __future__ import annotations

from typing import Any, Sequence


class DeepBindError(Exception):
    """Base class for all harness errors."""


class SpecViolation(DeepBindError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class ValidationError(DeepBindError):
    """A domain value failed one of its construction invariants."""


# -- gateway ---------------------------------------------------------------


class BackendUnavailable(DeepBindError):
    """Transport kept failing after the retry budget was spent."""


class BackendMalformed(DeepBindError):
    """The backend answered, but not in the expected wire shape."""


class UnparseableVerdict(DeepBindError):
    def __init__(self, raw: str, message: str = "critic output not understood") -> None:
        super().__init__(f"{message}: {raw[:120]!r}")
        self.raw = raw


class ExhaustedAttempts(DeepBindError):
    def __init__(self, attempts: int, audit: Sequence[Any], context: str = "") -> None:
        msg = f"no acceptable completion after {attempts} attempts"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)
        self.attempts = attempts
        self.audit = list(audit)


# -- personas / survey -----------------------------------------------------


class BackstoryFailed(DeepBindError):
    """Raised when one interview question cannot get an accepted answer."""

    def __init__(self, question_index: int, cause: ExhaustedAttempts) -> None:
        super().__init__(f"question {question_index}: {cause}")
        self.question_index = question_index
        self.cause = cause


class DegenerateDistribution(DeepBindError):
    pass


class TraitSurveyError(DeepBindError):
    def __init__(self, trait: str, cause: Exception) -> None:
        super().__init__(f"trait {trait!r}: {cause}")
        self.trait = trait
        self.cause = cause


# -- matching --------------------------------------------------------------


class SchemaMismatch(DeepBindError):
    pass


class DimensionError(DeepBindError):
    pass


class EmptyRoster(DeepBindError):
    pass


class DuplicateId(DeepBindError):
    pass


# -- game engine -----------------------------------------------------------


class MissingTrait(DeepBindError):
    pass


class UnknownFraming(DeepBindError):
    pass


class AllocationParseError(DeepBindError):
    """Base for failures to read an amount out of a completion."""


class NoNumberFound(AllocationParseError):
    pass


class OutOfRange(AllocationParseError):
    def __init__(self, value: int, endowment: int) -> None:
        super().__init__(f"amount {value} outside [0, {endowment}]")
        self.value = value
        self.endowment = endowment


# -- analysis --------------------------------------------------------------


class EmptyCell(DeepBindError):
    def __init__(self, cell: str) -> None:
        super().__init__(f"no trials in cell {cell}")
        self.cell = cell


class IncompleteDesign(DeepBindError):
    pass


class RankDeficient(DeepBindError):
    pass


class InsufficientData(DeepBindError):
    pass


class UnknownTerm(DeepBindError):
    pass


# -- runner ----------------------------------------------------------------


class ConfigError(DeepBindError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class CellError(DeepBindError):
    """Engine failure inside a counterfactual cell, with its coordinates."""

    def __init__(self, cell: tuple, cause: Exception) -> None:
        super().__init__(f"cell {cell}: {cause}")
        self.cell = cell
        self.cause = cause


class PipelineError(DeepBindError):
    def __init__(self, stage: str, cause: Exception, manifest: dict) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.manifest = manifest
