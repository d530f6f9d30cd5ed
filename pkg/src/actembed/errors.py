"""Exception hierarchy.

Every error raised by the package derives from ``ActEmbedError``. The three
families map onto CLI exit codes: configuration (2), data (3) and numerical
(4).
"""


class ActEmbedError(Exception):
    exit_code = 1


class ConfigError(ActEmbedError, ValueError):
    exit_code = 2


class UnknownKey(ConfigError):
    pass


class ConfigTypeError(ConfigError):
    pass


class MissingRequired(ConfigError):
    pass


class InvalidConfig(ConfigError):
    pass


class DataError(ActEmbedError, ValueError):
    exit_code = 3


class MalformedRow(DataError):
    def __init__(self, row, detail=""):
        self.row = row
        super().__init__(f"malformed row {row}: {detail}" if detail else f"malformed row {row}")


class MissingColumn(DataError):
    pass


class EmptyFile(DataError):
    pass


class EmptyDirectory(DataError):
    pass


class AllMissingChannel(DataError):
    def __init__(self, channel):
        self.channel = channel
        super().__init__(f"channel {channel} has no observed values")


class WindowLongerThanSession(DataError):
    pass


class EmptySeries(DataError):
    pass


class EmptySegment(DataError):
    pass


class EmptySubset(DataError):
    pass


class DimMismatch(DataError):
    pass


class InvalidShape(DataError):
    pass


class EmptyBatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class TooFewDistinctPoints(DataError):
    pass


class LengthMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class TooFewSessions(DataError):
    pass


class EmptyReport(DataError):
    pass


class NumericalError(ActEmbedError, ArithmeticError):
    exit_code = 4


class Diverged(NumericalError):
    def __init__(self, epoch, learning_rate):
        self.epoch = epoch
        self.learning_rate = learning_rate
        super().__init__(
            f"non-finite loss at epoch {epoch} (learning_rate={learning_rate})"
        )


class ConvergenceFailure(NumericalError):
    pass
