"""Exception hierarchy shared by every motive subsystem."""


class MotiveError(Exception):
    """Base class for all errors raised by this package."""


# registry
class RegistryError(MotiveError):
    pass


class InvalidCredential(RegistryError):
    pass


class DuplicateCredential(RegistryError):
    pass


class UnknownPeer(RegistryError):
    pass


class SelfRating(RegistryError):
    pass


class DuplicateRating(RegistryError):
    pass


class NotAParty(RegistryError):
    pass


class ScoreOutOfRange(RegistryError):
    pass


# mobility
class InvalidPlan(MotiveError):
    pass


class OutOfHorizon(MotiveError):
    pass


# beacons
class InvalidDescriptor(MotiveError):
    pass


class OversizeBeacon(MotiveError):
    pass


class MalformedBeacon(MotiveError):
    pass


# payments
class PaymentError(MotiveError):
    pass


class InsufficientFunds(PaymentError):
    def __init__(self, party, needed: int, available: int):
        super().__init__(f"peer {party} needs {needed}, has {available}")
        self.party = party
        self.needed = needed
        self.available = available


class IllegalState(PaymentError):
    pass


class ConservationViolation(PaymentError):
    pass


# compute offloading
class ComputeError(MotiveError):
    pass


class UnknownFunction(ComputeError):
    pass


class EmptyProbeBank(ComputeError):
    pass


class LengthMismatch(ComputeError):
    pass


# simulation
class ConfigError(MotiveError):
    """Scenario file problem, carrying the offending field path and/or line."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.field = field
        self.line = line


class CorruptLog(MotiveError):
    pass


class InvariantViolation(MotiveError):
    pass
