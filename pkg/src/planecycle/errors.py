"""Exception hierarchy.

Every error carries a stable ``code`` string so the CLI can report a
machine-parsable one-liner without special-casing each class.
"""


class PlaneCycleError(Exception):
    code = "E_INTERNAL"


class ShapeMismatch(PlaneCycleError, ValueError):
    code = "E_SHAPE"


class InvalidPermutation(PlaneCycleError, ValueError):
    code = "E_PERMUTATION"


class InvalidLength(PlaneCycleError, ValueError):
    code = "E_LENGTH"


class NonFiniteValue(PlaneCycleError, ValueError):
    code = "E_NONFINITE"


class UnsupportedHeadDim(PlaneCycleError, ValueError):
    code = "E_HEAD_DIM"


class IndivisibleExtent(PlaneCycleError, ValueError):
    code = "E_INDIVISIBLE"


class InvalidArch(PlaneCycleError, ValueError):
    code = "E_ARCH"


class InvalidSchedule(PlaneCycleError, ValueError):
    code = "E_SCHEDULE"


class EmptyMask(PlaneCycleError, ValueError):
    code = "E_EMPTY_MASK"


class ZeroReferenceFeature(PlaneCycleError, ValueError):
    code = "E_ZERO_REFERENCE"


class ConvergenceFailure(PlaneCycleError, RuntimeError):
    code = "E_PCA_CONVERGENCE"


# archive errors


class ArchiveError(PlaneCycleError):
    code = "E_ARCHIVE"


class MalformedHeader(ArchiveError):
    code = "E_MALFORMED_HEADER"


class OverlappingRanges(ArchiveError):
    code = "E_OVERLAPPING_RANGES"


class TruncatedFile(ArchiveError):
    code = "E_TRUNCATED"


class UnsupportedDtype(ArchiveError):
    code = "E_DTYPE"


class DuplicateName(ArchiveError):
    code = "E_DUPLICATE_NAME"


class IoFailure(ArchiveError):
    code = "E_IO"


class MissingEntry(ArchiveError):
    code = "E_MISSING_ENTRY"
