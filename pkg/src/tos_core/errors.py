"""Exception hierarchy for the terminal engine.

Every error raised by the engine derives from ``TosError`` so callers (and the
CLI) can catch one type.  Validation problems derive from ``ValidationError``
and map to exit code 1; everything else is a runtime error.
"""


class TosError(Exception):
    """Base class for all engine errors."""


class ValidationError(TosError):
    """Input failed a structural or semantic check."""


# -- core model --------------------------------------------------------------

class ContainerIdError(ValidationError):
    pass


class BadLength(ContainerIdError):
    pass


class BadCharacters(ContainerIdError):
    pass


class CheckDigitMismatch(ContainerIdError):
    pass


class UnknownCode(ValidationError):
    pass


class UnknownNode(ValidationError):
    pass


class DuplicateId(ValidationError):
    pass


class DanglingReference(ValidationError):
    pass


class ValidationFailed(ValidationError):
    pass


# -- edifact -----------------------------------------------------------------

class EdifactError(ValidationError):
    pass


class EmptyInput(EdifactError):
    pass


class UnterminatedSegment(EdifactError):
    pass


class DanglingRelease(EdifactError):
    pass


class EnvelopeMismatch(EdifactError):
    pass


class BadSegmentTag(EdifactError):
    pass


class NotBaplie(EdifactError):
    pass


class NotMovins(EdifactError):
    pass


class MalformedCell(EdifactError):
    pass


class InvalidContainerId(EdifactError):
    pass


class MalformedInstruction(EdifactError):
    pass


class EmptyMoveList(EdifactError):
    pass


class VisitNotWorking(EdifactError):
    pass


# -- berth -------------------------------------------------------------------

class NoFeasibleWindow(TosError):
    pass


class DraftExceedsDepth(TosError):
    pass


class VesselTooLong(TosError):
    pass


class UnknownVisit(TosError):
    pass


# -- yard / vessel -----------------------------------------------------------

class NoFeasibleSlot(TosError):
    pass


class ImoProhibited(NoFeasibleSlot):
    pass


class NotAPermutation(ValidationError):
    pass


class SlotOccupied(TosError):
    pass


class WouldFloat(TosError):
    pass


class UnknownContainer(TosError):
    pass


class NoFeasibleCell(TosError):
    pass


class StackWeightExceeded(NoFeasibleCell):
    pass


# -- dispatch ----------------------------------------------------------------

class EmptyQueue(TosError):
    pass


class NotRunning(TosError):
    pass


# -- orders / gate -----------------------------------------------------------

class UnknownOrder(TosError):
    pass


class TerminalStatus(TosError):
    pass


class MissingContainer(ValidationError):
    pass


class ImmutableField(ValidationError):
    pass


class InvalidTransition(TosError):
    pass


class HoldActive(TosError):
    pass


class OrderNotValidated(TosError):
    pass


class CustomsUnpaid(TosError):
    pass


class OutOfOrderTransition(TosError):
    pass


class WrongState(TosError):
    pass


class AuthorityMismatch(TosError):
    pass


class NoSuchHold(TosError):
    pass


class NotConnected(TosError):
    pass


class NotReefer(TosError):
    pass


class NonMonotonicTime(TosError):
    pass


# -- billing -----------------------------------------------------------------

class UnknownServiceCode(TosError):
    def __init__(self, events, lines=()):
        codes = sorted({e.service_code for e in events})
        super().__init__(f"unknown service codes: {', '.join(codes)}")
        self.events = list(events)
        self.lines = list(lines)


class EmptyLines(ValidationError):
    pass


class SequenceCorruption(TosError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class UnknownTarget(ValidationError):
    pass


# -- reporting ---------------------------------------------------------------

class EmptyPeriod(ValidationError):
    pass


class FutureTimestamp(ValidationError):
    pass


# -- cli / sim ---------------------------------------------------------------

class UnsortedEvents(ValidationError):
    pass


class MissingReferencedFile(ValidationError):
    pass


class VersionMismatch(TosError):
    pass


class CorruptSnapshot(TosError):
    pass


class UnknownUser(ValidationError):
    pass
