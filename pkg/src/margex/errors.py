"""Exception types shared across the package."""


class MargexError(Exception):
    """Base class for all library errors."""


class DomainError(MargexError, ValueError):
    """An argument lies outside an operation's domain."""


class CapacityError(MargexError):
    """A dense table or search would exceed the configured hard cap."""


class ConsistencyError(MargexError):
    """Measures that must share a projection do not."""


class SingularityError(MargexError):
    """A required overlap cell has zero mass."""


class ZeroMassError(MargexError):
    """Conditioning on an atom of zero mass."""


class PositivityError(MargexError):
    """A measure that must be nonnegative has a negative cell."""

    def __init__(self, message, *, margin=None, cell=None):
        super().__init__(message)
        self.margin = margin
        self.cell = cell


class IndependenceError(MargexError):
    """A measured independence defect exceeds its budget."""

    def __init__(self, message, *, defect=None, budget=None, index=None):
        super().__init__(message)
        self.defect = defect
        self.budget = budget
        self.index = index


class AnchorError(MargexError):
    """An anchor pair for a right inverse does not satisfy its projection relation."""


class QuantizationError(MargexError):
    """Atom counts cannot realize a required split exactly."""


class MixingSupplyError(MargexError):
    """No supplied time shows enough measured mixing for the current step."""

    def __init__(self, message, *, step=None):
        super().__init__(message)
        self.step = step


class WindowError(MargexError):
    """Coordinates fall outside the configured finite window."""
