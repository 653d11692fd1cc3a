"""Exception hierarchy shared by every semwsn module."""

from __future__ import annotations


class SemWSNError(Exception):
    """Base class for all library errors."""


# -- core model ---------------------------------------------------------------
class UnknownPrefix(SemWSNError):
    pass


class NonGroundTriple(SemWSNError):
    pass


class InvalidModel(SemWSNError, ValueError):
    """A domain value violates its invariants (bad coordinates, wrong unit...)."""


# -- wire formats -------------------------------------------------------------
class FormatError(SemWSNError, ValueError):
    pass


class MalformedPack(FormatError):
    pass


class UnknownUnit(FormatError):
    pass


class MissingValue(FormatError):
    pass


class MalformedRecord(FormatError):
    pass


class UnknownQuantity(FormatError):
    pass


class NTriplesSyntaxError(FormatError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class BlankNodeUnsupported(NTriplesSyntaxError):
    pass


# -- ontology -----------------------------------------------------------------
class OrphanTriple(SemWSNError):
    pass


class VersionMismatch(SemWSNError):
    pass


# -- overlay / simulator ------------------------------------------------------
class TimeTravel(SemWSNError):
    pass


class HorizonExceeded(SemWSNError):
    pass


class NoProvider(SemWSNError):
    pass


class FragmentUnavailable(SemWSNError):
    pass


# -- agents -------------------------------------------------------------------
class UnitNotInFragment(SemWSNError):
    pass


class StaleFragment(SemWSNError):
    pass


class NoGTO(SemWSNError):
    pass


class AppUnavailable(SemWSNError):
    pass


# -- reasoner / query ---------------------------------------------------------
class RuleSyntaxError(SemWSNError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


class UnboundHeadVariable(SemWSNError):
    pass


class UnknownBuiltin(SemWSNError):
    pass


class NonNumericComparison(SemWSNError):
    pass


class QuerySyntaxError(SemWSNError):
    def __init__(self, message: str, offset: int = -1):
        super().__init__(message if offset < 0 else f"offset {offset}: {message}")
        self.offset = offset


class UnsupportedFilter(QuerySyntaxError):
    pass


# -- application / harness ----------------------------------------------------
class NotFound(SemWSNError, KeyError):
    pass


class ConfigInvalid(SemWSNError):
    pass


class GoldenMismatch(SemWSNError):
    pass
