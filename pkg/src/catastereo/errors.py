"""Exception hierarchy.

Every error raised on purpose by the toolkit derives from
:class:`CatastereoError`, which is itself a ``ValueError`` so callers that
only care about bad input can catch the builtin.
"""


class CatastereoError(ValueError):
    pass


class InvalidMirrorError(CatastereoError):
    pass


class DegenerateRigError(CatastereoError):
    pass


class BehindCameraError(CatastereoError):
    pass


class OutOfMirrorError(CatastereoError):
    pass


class MirrorOccludesCameraError(CatastereoError):
    """The mirror reaches the optical axis (``2 b_m <= l_m sin(beta)``)."""


class DivergingViewsError(CatastereoError):
    """Inner edge rays do not converge, so no finite minimal distance exists."""


class EmptyGridError(CatastereoError):
    pass


class DegeneratePointsError(CatastereoError):
    pass


class InsufficientDataError(CatastereoError):
    pass


class IllConditionedError(CatastereoError):
    def __init__(self, message, condition_number=float("inf")):
        super().__init__(f"{message} (condition number {condition_number:.3g})")
        self.condition_number = condition_number


class UnreliableDepthError(CatastereoError):
    pass


class CheiralityError(CatastereoError):
    pass


class ParallelRaysError(CatastereoError):
    pass


class EmptySkeletonError(CatastereoError):
    pass


class EmptyCommonFovError(CatastereoError):
    pass


class SchemaError(CatastereoError):
    pass
