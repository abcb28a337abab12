"""Exception hierarchy shared by every module in the package."""


class LedgerError(Exception):
    """Base class for domain errors (CLI exit status 1)."""


class MissingField(LedgerError):
    pass


class EmptyLeaves(LedgerError):
    pass


class MalformedTransaction(LedgerError):
    pass


class UnknownCase(LedgerError):
    pass


class CaseExists(LedgerError):
    pass


class UnknownToken(LedgerError):
    pass


class UnknownParent(LedgerError):
    pass


class EmptyParents(LedgerError):
    pass


class DuplicateToken(LedgerError):
    pass


class AlreadyRegistered(LedgerError):
    pass


class UnregisteredSender(LedgerError):
    """A case-creating transaction came from a key with no registered role."""


class EmptyMempool(LedgerError):
    pass


class OutOfOrderBlock(LedgerError):
    pass


class InfeasibleSpec(LedgerError):
    pass


class InvalidPolicy(LedgerError):
    pass
