"""Volume, geometry and label-schema types shared by every module."""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .exceptions import GeometryMismatchError, SchemaViolationError, ValidationError

GEOMETRY_RTOL = 1e-4

EVALUATION_REGIONS = ("ET", "NET", "CC", "ED", "TC", "WT")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class VoxelGeometry:
    """Voxel grid: dims, mm spacing and the voxel-to-mm affine."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValidationError(f"dims must be three positive integers, got {self.dims}")
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ValidationError(f"spacing must be three positive reals, got {self.spacing}")
        if self.affine is None:
            affine = np.diag(spacing + (1.0,))
        else:
            affine = np.asarray(self.affine, dtype=float)
        if affine.shape != (4, 4) or not np.all(np.isfinite(affine)):
            raise ValidationError("affine must be a finite 4x4 matrix")
        norms = np.linalg.norm(affine[:3, :3], axis=0)
        if not np.allclose(norms, spacing, rtol=GEOMETRY_RTOL, atol=0.0):
            raise ValidationError(
                f"affine column norms {norms.tolist()} disagree with spacing {list(spacing)}"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", _frozen(affine))

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def with_dims(self, dims, origin_shift=(0, 0, 0)) -> "VoxelGeometry":
        """Geometry of a sub/super-grid whose voxel (0,0,0) sits at ``origin_shift``."""
        affine = np.array(self.affine)
        affine[:3, 3] = affine[:3, :3] @ np.asarray(origin_shift, dtype=float) + affine[:3, 3]
        return VoxelGeometry(tuple(dims), self.spacing, affine)

    def __repr__(self):
        return f"VoxelGeometry(dims={self.dims}, spacing={self.spacing})"


def geometry_compatible(a: VoxelGeometry, b: VoxelGeometry) -> bool:
    """True iff dims match exactly and spacing/affine agree within 1e-4 relative."""
    if a.dims != b.dims:
        return False
    if not np.allclose(a.spacing, b.spacing, rtol=GEOMETRY_RTOL, atol=0.0):
        return False
    # affine entries are compared relative to the grid scale so that zero
    # off-diagonal terms do not demand exact equality
    scale = max(np.abs(a.affine[:3, :3]).max(), np.abs(b.affine[:3, :3]).max(), 1.0)
    return bool(np.allclose(a.affine, b.affine, rtol=GEOMETRY_RTOL, atol=GEOMETRY_RTOL * scale))


def require_compatible(a: VoxelGeometry, b: VoxelGeometry, what: str = "volumes") -> None:
    if not geometry_compatible(a, b):
        raise GeometryMismatchError(f"{what} are not on the same grid: {a!r} vs {b!r}")


@dataclass(frozen=True)
class LabelSchema:
    """Raw region codes plus composite regions built from them."""

    raw_regions: Mapping[str, int] = field(
        default_factory=lambda: {"ET": 1, "NET": 2, "CC": 3, "ED": 4}
    )
    composites: Mapping[str, frozenset] = field(
        default_factory=lambda: {
            "TC": frozenset({"ET", "NET", "CC"}),
            "WT": frozenset({"ET", "NET", "CC", "ED"}),
        }
    )

    def __post_init__(self):
        raw = {str(k): int(v) for k, v in self.raw_regions.items()}
        comp = {str(k): frozenset(v) for k, v in self.composites.items()}
        codes = list(raw.values())
        if len(set(codes)) != len(codes) or any(c <= 0 for c in codes):
            raise ValidationError(f"raw region codes must be distinct and positive: {raw}")
        for name, members in comp.items():
            unknown = members - raw.keys()
            if unknown:
                raise ValidationError(f"composite {name} references unknown regions {sorted(unknown)}")
        if set(raw) | set(comp) != set(EVALUATION_REGIONS) or set(raw) & set(comp):
            raise ValidationError(
                f"schema must define exactly {EVALUATION_REGIONS}, got {sorted(raw)} + {sorted(comp)}"
            )
        object.__setattr__(self, "raw_regions", MappingProxyType(raw))
        object.__setattr__(self, "composites", MappingProxyType(comp))

    @property
    def codes(self) -> tuple[int, ...]:
        """Raw codes in ascending order; class index i+1 maps to codes[i]."""
        return tuple(sorted(self.raw_regions.values()))

    @property
    def regions(self) -> tuple[str, ...]:
        return EVALUATION_REGIONS

    def check(self, labels: np.ndarray) -> None:
        present = np.unique(labels)
        bad = set(present.tolist()) - set(self.codes) - {0}
        if bad:
            raise SchemaViolationError(bad)


PED2025 = LabelSchema()
SCHEMAS = {"ped2025": PED2025}


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    geometry: VoxelGeometry
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != self.geometry.dims:
            raise ValidationError(f"data shape {data.shape} != geometry dims {self.geometry.dims}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("volume contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def from_array(cls, data, spacing=(1.0, 1.0, 1.0), affine=None) -> "ScalarVolume":
        data = np.asarray(data)
        return cls(VoxelGeometry(data.shape, spacing, affine), data)

    def like(self, data) -> "ScalarVolume":
        return ScalarVolume(self.geometry, data)


@dataclass(frozen=True, eq=False)
class LabelVolume:
    geometry: VoxelGeometry
    labels: np.ndarray
    schema: LabelSchema = PED2025

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != self.geometry.dims:
            raise ValidationError(f"label shape {labels.shape} != geometry dims {self.geometry.dims}")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.isfinite(labels)) or np.any(labels != np.round(labels)):
                raise ValidationError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.size and labels.min() < 0:
            raise SchemaViolationError(np.unique(labels[labels < 0]))
        self.schema.check(labels)
        object.__setattr__(self, "labels", _frozen(labels))

    @classmethod
    def from_array(cls, labels, spacing=(1.0, 1.0, 1.0), affine=None, schema=PED2025) -> "LabelVolume":
        labels = np.asarray(labels)
        return cls(VoxelGeometry(labels.shape, spacing, affine), labels, schema)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    geometry: VoxelGeometry
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != self.geometry.dims:
            raise ValidationError(f"mask shape {bits.shape} != geometry dims {self.geometry.dims}")
        object.__setattr__(self, "bits", _frozen(bits))

    @classmethod
    def from_array(cls, bits, spacing=(1.0, 1.0, 1.0), affine=None) -> "BinaryMask":
        bits = np.asarray(bits)
        return cls(VoxelGeometry(bits.shape, spacing, affine), bits)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))


def compose_regions(labels: LabelVolume, schema: LabelSchema | None = None) -> dict[str, BinaryMask]:
    """Binary masks for the four raw regions and the two composites.

    Composites are unions of their members' masks. Masks come back in
    ``EVALUATION_REGIONS`` order.
    """
    schema = schema or labels.schema
    arr = labels.labels
    schema.check(arr)
    raw = {name: arr == code for name, code in schema.raw_regions.items()}
    out = {}
    for name in EVALUATION_REGIONS:
        if name in raw:
            bits = raw[name]
        else:
            bits = np.zeros(arr.shape, dtype=bool)
            for member in schema.composites[name]:
                bits |= raw[member]
        out[name] = BinaryMask(labels.geometry, bits)
    return out
