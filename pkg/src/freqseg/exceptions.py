"""Exception hierarchy.

Every error carries enough context (offending code, header fields, shapes)
to diagnose the input without a debugger. The CLI maps these classes onto
its exit-code contract.
"""
from __future__ import annotations


class FreqsegError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FreqsegError, ValueError):
    """Input violates a documented precondition (CLI exit code 2)."""


class SchemaViolationError(ValidationError):
    """A label volume contains a code unknown to the active schema."""

    def __init__(self, codes, message: str | None = None):
        self.codes = sorted(int(c) for c in codes)
        super().__init__(message or f"label codes not in schema: {self.codes}")


class GeometryMismatchError(ValidationError):
    """Two volumes that must share a voxel grid do not."""


class SpecError(ValidationError):
    """An ensemble/schedule/patch specification is malformed."""


class DegenerateInputError(ValidationError):
    """Input has no usable content (e.g. an empty normalisation mask)."""


class StructureError(ValidationError):
    """A coefficient set is internally inconsistent."""


class NiftiError(FreqsegError):
    """Base class for NIfTI reader/writer failures (CLI exit code 1)."""


class NiftiFormatError(NiftiError, ValueError):
    """Header describes something the reader does not support."""


class NiftiCorruptionError(NiftiError):
    """File is truncated or otherwise unreadable."""


class DimensionalityError(NiftiFormatError):
    """A 3D reader was handed a 4D file, or the reverse."""


class DecompositionError(FreqsegError):
    """A frequency decomposition step failed (CLI exit code 3)."""
