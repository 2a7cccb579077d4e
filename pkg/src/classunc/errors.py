"""Exception types. Each carries a short category used by the CLI exit line."""


class ClassUncError(Exception):
    category = "error"


class NonFiniteError(ClassUncError, FloatingPointError):
    category = "non-finite"


class DatasetFormatError(ClassUncError, ValueError):
    category = "dataset-format"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ClassUncError, ValueError):
    category = "config"


class MeasureRequiredError(ConfigError):
    category = "measure-required"


class EnsembleMemberError(ClassUncError):
    category = "training"

    def __init__(self, member: int, cause: Exception):
        self.member = member
        super().__init__(f"ensemble member {member}: {cause}")
