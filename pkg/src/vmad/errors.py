"""Exception hierarchy shared by every module of the toolkit."""

from __future__ import annotations


class VmadError(Exception):
    """Base class for all toolkit errors."""


# -- ingestion ---------------------------------------------------------------


class MissingFile(VmadError, FileNotFoundError):
    pass


class ParseError(VmadError, ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class InvalidDataset(VmadError, ValueError):
    """Raised when a loaded dataset violates one of its invariants."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class ReferentialIntegrityError(InvalidDataset):
    def __init__(self, ident: str, message: str, report=None):
        self.ident = ident
        super().__init__(f"{ident}: {message}", report)


class UnknownFrame(VmadError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown frame"


class DuplicateEntry(VmadError, ValueError):
    pass


class ScoreOutOfRange(VmadError, ValueError):
    pass


# -- fusion ------------------------------------------------------------------


class EmptySequence(VmadError, ValueError):
    pass


class ThresholdOutOfRange(VmadError, ValueError):
    pass


class LengthMismatch(VmadError, ValueError):
    pass


class AllZeroWeights(VmadError, ValueError):
    pass


class MissingTrack(VmadError, KeyError):
    def __init__(self, attempt: str, track: str):
        self.attempt = attempt
        self.track = track
        super().__init__(f"attempt {attempt}: missing track {track!r}")

    def __str__(self) -> str:
        return self.args[0]


class MissingLabel(VmadError, ValueError):
    pass


# -- quality -----------------------------------------------------------------


class BoxOutOfBounds(VmadError, ValueError):
    pass


class DegenerateBox(VmadError, ValueError):
    pass


class InvalidStatistic(VmadError, ValueError):
    pass


class UnsupportedImage(VmadError, ValueError):
    pass


# -- metrics -----------------------------------------------------------------


class EmptySet(VmadError, ValueError):
    pass


class DegenerateCurve(VmadError, ValueError):
    pass


# -- svr ---------------------------------------------------------------------


class DimensionMismatch(VmadError, ValueError):
    pass


class NonConvergence(VmadError, RuntimeError):
    def __init__(self, iterations: int, gap: float):
        self.iterations = iterations
        self.gap = gap
        super().__init__(f"SMO did not converge after {iterations} iterations (gap {gap:.3g})")


class DegenerateInput(VmadError, ValueError):
    pass


class TooFewAttempts(VmadError, ValueError):
    pass


class ModelFormatError(VmadError, ValueError):
    pass


# -- synth -------------------------------------------------------------------


class InvalidConfig(VmadError, ValueError):
    pass
