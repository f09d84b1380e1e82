class FairRankError(Exception):
    """Base class for every error raised by the toolkit.

    ``stage`` names the pipeline stage (ingest, train, rerank, ...) so the
    command layer can tag its diagnostics.
    """

    stage = None

    def __init__(self, message, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class DataFormatError(FairRankError):
    """A raw or canonical file could not be parsed."""

    stage = 'ingest'

    def __init__(self, message, path=None, line=None, stage=None):
        location = ''
        if path is not None:
            location = f'{path}'
            if line is not None:
                location += f', line {line}'
            location += ': '
        super().__init__(f'{location}{message}', stage=stage)
        self.path = path
        self.line = line


class InvariantViolation(FairRankError):
    """Data violates an invariant the math depends on."""


class UnknownIdError(FairRankError, KeyError):
    """A user, item, category or attribute is not in the index tables."""


class ConfigError(FairRankError, ValueError):
    stage = 'config'


class TrainingDivergedError(FairRankError):
    stage = 'train'


class BudgetExceededError(FairRankError):
    stage = 'rerank'


class IncompleteRunError(FairRankError):
    stage = 'report'
