"""
Error hierarchy shared by every module.

Each branch carries the process exit code the CLI maps it to:
config errors exit with 2, data errors with 3, numeric failures with 4.
"""

from __future__ import annotations

from typing import Optional


class LabError(Exception):
    """Root of all domain errors."""

    exit_code: int = 1


class ConfigError(LabError):
    exit_code = 2


class DataError(LabError):
    exit_code = 3


class NumericError(LabError):
    exit_code = 4


# --- data errors ------------------------------------------------------------


class MissingTable(DataError):
    """The traditional-to-simplified mapping file could not be loaded."""


class EmptyCorpus(DataError):
    pass


class InvalidId(DataError):
    pass


class UnknownToken(DataError):
    pass


class WrongArity(DataError):
    pass


class IdOutOfRange(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


class EmptyCandidates(DataError):
    pass


class EmptyTaskData(DataError):
    pass


class EmptyStage(DataError):
    pass


class ProviderUnavailable(DataError):
    pass


class CorpusReadError(DataError):
    """A corpus or artifact file could not be read."""


class ArtifactWriteError(DataError):
    """An artifact file or its directory could not be written."""


# --- numeric errors ---------------------------------------------------------


class DegenerateInput(NumericError):
    pass


class ZeroVector(NumericError):
    pass


class InvalidDistribution(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class NonFiniteLoss(NumericError):
    """Raised before the optimizer step when the batch loss is NaN or infinite."""

    def __init__(self, batch_index: int, value: float, stage: Optional[str] = None) -> None:
        self.batch_index = batch_index
        self.value = value
        self.stage = stage
        where = f" in stage '{stage}'" if stage else ""
        super().__init__(f"non-finite loss {value} at batch {batch_index}{where}")

    def with_stage(self, stage: str) -> "NonFiniteLoss":
        return NonFiniteLoss(self.batch_index, self.value, stage=stage)


# --- pipeline ---------------------------------------------------------------


class PipelineError(LabError):
    """A pipeline component failed; keeps the exit code of the underlying error."""

    def __init__(self, component: str, stage: str, cause: BaseException) -> None:
        self.component = component
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"[{stage}] {component} failed: {cause}")
