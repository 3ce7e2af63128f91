"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` is a usage error,
``DataError`` a data error and ``TrainingError`` a training failure.
"""


class PsonnError(Exception):
    pass


class ConfigError(PsonnError, ValueError):
    pass


class DataError(PsonnError, ValueError):
    pass


class CsvFormatError(DataError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class TrainingError(PsonnError, RuntimeError):
    pass


class PipelineError(PsonnError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
