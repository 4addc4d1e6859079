"""Exception types raised across the package."""


class SigfitError(Exception):
    """Base class for all package errors."""


class TransformDomainError(SigfitError, ValueError):
    """A case count cannot be mapped through the requested transform."""


class NoInflection(SigfitError):
    """The back-transformed curve has no inflection inside the search bracket."""


class DegenerateSeries(SigfitError, ValueError):
    """A group's series is too short or too flat to fit four parameters."""


class InsufficientGroups(SigfitError, ValueError):
    pass


class NotConverged(SigfitError):
    pass


class GroupNotFound(SigfitError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "group not found"


class SchemaError(SigfitError, ValueError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing required column(s): " + ", ".join(self.missing))


class CorruptFeed(SigfitError, ValueError):
    pass


class UnknownGroup(SigfitError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown group"


class BelowThreshold(SigfitError, ValueError):
    pass


class ShapeError(SigfitError, ValueError):
    pass
