"""Input coercion and checks shared by the estimator wrappers."""
from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ValidationError
from .volgrid import LabelVolume, ScalarVolume, SCHEMAS, LabelSchema


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_volume(X, name: str = "X") -> tuple[ScalarVolume, bool]:
    """Coerce a 3-D array or ScalarVolume; the flag records whether it was a bare array."""
    if isinstance(X, ScalarVolume):
        return X, False
    arr = np.asarray(X)
    if arr.ndim != 3:
        raise ValidationError(f"{name}: expected a 3-D volume, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.number) or np.issubdtype(arr.dtype, np.complexfloating):
        raise ValidationError(f"{name}: expected real numeric data, got dtype {arr.dtype}")
    return ScalarVolume.from_array(arr), True


def check_labels(X, schema: LabelSchema, name: str = "y") -> LabelVolume:
    if isinstance(X, LabelVolume):
        return X
    return LabelVolume.from_array(np.asarray(X), schema=schema)


def check_schema(schema) -> LabelSchema:
    if isinstance(schema, LabelSchema):
        return schema
    try:
        return SCHEMAS[schema]
    except KeyError:
        raise ValidationError(f"unknown label schema {schema!r}; known: {sorted(SCHEMAS)}") from None


def unwrap(vol: ScalarVolume, as_array: bool):
    return np.array(vol.data) if as_array else vol
