"""Exception hierarchy shared by all srlknn modules."""


class SrlKnnError(Exception):
    """Base class for every error raised by this package."""


class DataError(SrlKnnError):
    """Input data is malformed or inconsistent."""


class ConfigError(SrlKnnError):
    """A configuration value is out of range or inconsistent."""


class EmptyScanSet(DataError):
    pass


class LengthMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class InvalidAp(DataError):
    pass


class NotAPermutation(DataError):
    pass


class EmptyDatabase(DataError):
    pass


class ZeroVariance(DataError):
    pass


class EmptyTrajectory(DataError):
    pass


class MissingGridSize(ConfigError):
    pass


class InvalidStageSizes(ConfigError):
    pass


class ParseError(DataError):
    """A CSV file could not be parsed; carries the offending row and column."""

    def __init__(self, path, row=None, column=None, message=""):
        self.path = str(path)
        self.row = row
        self.column = column
        where = self.path
        if row is not None:
            where += f", row {row}"
        if column is not None:
            where += f", column {column!r}"
        super().__init__(f"{where}: {message}" if message else where)


class EmptyAfterFilter(DataError):
    pass


class SchemaVersionMismatch(DataError):
    """A database file is corrupt or was written with an unsupported schema."""


class InvalidConfig(ConfigError):
    pass
