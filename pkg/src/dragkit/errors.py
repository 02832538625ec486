"""Error hierarchy shared by the whole package.

Every error carries a stable ``code`` (the class name) so the CLI and the
HTTP service can emit machine-readable error payloads.
"""


class DragkitError(Exception):
    """Base class for all dragkit errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class ConflictingControlPoints(DragkitError):
    """Two pairs share a source (or target) point but carry different drag vectors."""


class EmptySourceRegion(DragkitError):
    """The source mask has no set cells."""


class ShapeMismatch(DragkitError):
    """Grid/feature dimensions of the inputs disagree."""


class InvalidStep(DragkitError):
    """Schedule step outside [0, total_steps)."""


class InvalidLambda(DragkitError):
    """Blending coefficient outside [0, 1]."""


class MissingPosition(DragkitError):
    """A token that requires a grid position has none."""


class NonFiniteInput(DragkitError):
    """Attention inputs contain NaN or infinity."""


class MalformedSpec(DragkitError):
    """A drag-spec document failed validation."""


class MaskSizeMismatch(DragkitError):
    """Mask image dimensions disagree with the declared image size."""
