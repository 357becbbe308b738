"""Exception taxonomy shared by all modules."""


class UsageError(ValueError):
    """Caller passed arguments outside an operation's contract."""


class GroupMismatchError(UsageError):
    """Two values from different groups were combined."""


class WindowMismatchError(UsageError):
    """Two configurations with different windows were combined."""


class PreconditionError(UsageError):
    """A documented precondition does not hold (e.g. identity not in a Palm set)."""


class ResourceBudgetError(RuntimeError):
    """An enumeration would exceed its size budget; the message names the bound."""


class InvariantViolation(RuntimeError):
    """An internal invariant that should be impossible to break was broken."""


class InvarianceViolation(UsageError):
    """A measure failed the shift-invariance check; carries a witness.

    The witness is a partial transformation between two single atoms whose
    masses differ: ``(domain_atom, range_atom, shift)``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
