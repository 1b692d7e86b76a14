"""Exception hierarchy. The CLI maps each class to its own exit code."""


class SpbenchError(Exception):
    exit_code = 1


class ConfigError(SpbenchError):
    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DataError(SpbenchError):
    exit_code = 3


class EmptyResultError(DataError):
    """Raised when filtering leaves nothing behind."""


class TrainingError(SpbenchError):
    exit_code = 4


class ArtifactError(SpbenchError):
    """Missing or unreadable stage artifacts."""

    exit_code = 5
