"""Exception types raised across the package.

Everything derives from :class:`DeepSpaceError` so the command line can map
data problems to a single exit status.
"""


class DeepSpaceError(ValueError):
    pass


class NonPositiveDuration(DeepSpaceError):
    pass


class MissingHeader(DeepSpaceError):
    pass


class EmptyInput(DeepSpaceError):
    pass


class UnknownStation(DeepSpaceError, KeyError):
    pass


class ShapeMismatch(DeepSpaceError):
    pass


class LabelOutOfRange(DeepSpaceError):
    pass


class EmptyIndex(DeepSpaceError):
    pass


class UnknownCoarseLabel(DeepSpaceError, KeyError):
    pass


class CorruptFile(DeepSpaceError):
    pass


class VersionMismatch(DeepSpaceError):
    pass


class BoxTooSmall(DeepSpaceError):
    pass


class EmptyTestSet(DeepSpaceError):
    pass


class SequenceTooShort(DeepSpaceError):
    pass
