"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GeoScoutError(Exception):
    """Base class for all library errors."""


class GenerationError(GeoScoutError):
    """A task generator could not produce a case from this source.

    Dataset assembly treats these as skippable: the offending source is
    logged and replaced by the next candidate.
    """


class InfeasibleCrop(GenerationError):
    """ROI bounds leave no room for the requested crop size."""


class ImageTooSmall(GenerationError):
    """Image cannot support the requested patch geometry."""


class ReferenceUnavailable(GenerationError):
    """No sibling slice or retrieval hit exists for this source."""


class DegenerateReference(GenerationError):
    """Reference image is byte-identical to the target."""


class DimensionMismatch(GeoScoutError):
    """Vector dimensionality does not match the index."""


class EmptyIndex(GeoScoutError):
    """Embedding index holds no candidate entries."""


class SchemaError(GeoScoutError):
    """A serialized file violates its documented schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientSources(GeoScoutError):
    """A quota cell cannot be filled from the available catalog."""


class UnknownId(GeoScoutError):
    """A response id has no matching manifest record."""


class DuplicateId(GeoScoutError):
    """The same response id was supplied more than once."""


class MissingResponse(GeoScoutError):
    """A manifest record has no response under the strict policy."""


class UnknownTaskKind(GeoScoutError):
    """Ground truth object does not belong to any known task."""


class EmptyInput(GeoScoutError):
    """An aggregate operation received too few records."""
