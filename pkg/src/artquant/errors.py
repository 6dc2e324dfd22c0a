"""Exception hierarchy shared by every module."""


class ArtQuantError(Exception):
    """Base class for all errors raised by artquant."""


# raster
class DecodeError(ArtQuantError, ValueError):
    pass


class DimensionError(ArtQuantError, ValueError):
    pass


# features
class GeometryError(ArtQuantError, ValueError):
    pass


# hedonic
class AlignmentError(ArtQuantError, ValueError):
    pass


class DomainError(ArtQuantError, ValueError):
    pass


class UnknownLevelError(ArtQuantError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class RankDeficiencyError(ArtQuantError, ArithmeticError):
    """Design matrix lacks full column rank.

    ``columns`` lists every column taking part in a detected linear
    dependency, so callers can name them in reports.
    """

    def __init__(self, message: str, columns: list[str]):
        super().__init__(message)
        self.columns = list(columns)


class SchemaError(ArtQuantError, ValueError):
    pass


class ConfigMismatchError(ArtQuantError, ValueError):
    pass


class MissingTermError(ArtQuantError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


# catalog
class ParseError(ArtQuantError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


class ValidationError(ParseError):
    pass
