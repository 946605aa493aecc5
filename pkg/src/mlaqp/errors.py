"""Exception hierarchy shared by all mlaqp modules."""


class MlaqpError(Exception):
    """Base class for every error raised by mlaqp."""


# schema / pairs
class LengthMismatch(MlaqpError, ValueError):
    pass


class InvertedBounds(MlaqpError, ValueError):
    pass


class InvalidAnswer(MlaqpError, ValueError):
    pass


class NonFiniteAnswer(InvalidAnswer):
    pass


# sql parsing
class SQLError(MlaqpError, ValueError):
    """Parse-time rejection. ``position`` is the 0-based character offset."""

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at position {position})")
        self.message = message
        self.position = position


class SQLSyntaxError(SQLError):
    pass


class UnsupportedFeature(SQLError):
    pass


class UnknownIdentifier(SQLError):
    pass


# vectorizer
class EncodingError(MlaqpError, ValueError):
    pass


class MissingCatalogueEntry(MlaqpError, KeyError):
    pass


# executor
class EmptySelection(MlaqpError, ValueError):
    pass


# gbdt
class InsufficientData(MlaqpError, ValueError):
    pass


class DegenerateTarget(MlaqpError, ValueError):
    pass


class WidthMismatch(MlaqpError, ValueError):
    pass


class NoValidSplit(MlaqpError, ValueError):
    pass


# intervals
class EmptyHoldout(MlaqpError, ValueError):
    pass


# clustering
class EmptyClusterSet(MlaqpError, ValueError):
    pass


# drift
class EmptySample(MlaqpError, ValueError):
    pass


class InvalidAlpha(MlaqpError, ValueError):
    pass


class SingularCovariance(MlaqpError, ValueError):
    pass


class VacuousBound(MlaqpError, ValueError):
    pass


# catalogue persistence
class CatalogueIOError(MlaqpError, OSError):
    pass


class VersionMismatch(MlaqpError):
    pass


class CorruptEntry(MlaqpError):
    def __init__(self, entry: str, reason: str):
        super().__init__(f"corrupt catalogue entry {entry!r}: {reason}")
        self.entry = entry


class MissingManifest(MlaqpError, FileNotFoundError):
    pass


# workload generation
class DegenerateRange(MlaqpError, ValueError):
    pass


# evaluation
class ZeroTruth(MlaqpError, ZeroDivisionError):
    pass


class ZeroMean(MlaqpError, ZeroDivisionError):
    pass


class InsufficientWorkload(MlaqpError, ValueError):
    pass


# prediction
class UnknownAggregate(MlaqpError, KeyError):
    def __init__(self, key: str, known):
        super().__init__(f"no model for {key}; known: {', '.join(sorted(known)) or 'none'}")
        self.key = key
        self.known = sorted(known)

    def __str__(self):
        return self.args[0]
