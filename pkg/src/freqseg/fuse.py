"""Weighted ensemble of per-model class probabilities and conversion to labels."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import GeometryMismatchError, SpecError, ValidationError
from .volgrid import LabelSchema, LabelVolume, PED2025, VoxelGeometry, require_compatible

SUM_TOL = 1e-4
WEIGHT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ProbVolume:
    """Class probabilities with the class axis last: shape ``dims + (C,)``."""

    geometry: VoxelGeometry
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 4 or p.shape[:3] != self.geometry.dims:
            raise ValidationError(f"probabilities of shape {p.shape} do not fit dims {self.geometry.dims} x C")
        if p.shape[3] < 2:
            raise ValidationError(f"need at least 2 classes, got {p.shape[3]}")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise ValidationError("probabilities must be finite and lie in [0, 1]")
        worst = np.abs(p.sum(axis=3) - 1.0).max()
        if worst > SUM_TOL:
            raise ValidationError(f"per-voxel class sums deviate from 1 by up to {worst:.3g}")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def classes(self) -> int:
        return self.probs.shape[3]

    @classmethod
    def from_array(cls, geometry: VoxelGeometry, values, renormalize: bool = True) -> "ProbVolume":
        """Validate, then optionally divide each voxel by its class sum.

        Sums must already be within 1e-4 of 1; renormalising only removes the
        rounding left by float32 storage.
        """
        vol = cls(geometry, values)
        if not renormalize:
            return vol
        p = vol.probs / vol.probs.sum(axis=3, keepdims=True)
        return cls(geometry, np.clip(p, 0.0, 1.0))


@dataclass(frozen=True)
class EnsembleSpec:
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w:
            raise SpecError("ensemble needs at least one weight")
        if any(not math.isfinite(x) or x <= 0 for x in w):
            raise SpecError(f"weights must be positive, got {w}")
        if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise SpecError(f"weights must sum to 1, got {math.fsum(w)!r}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def equal(cls, n: int) -> "EnsembleSpec":
        return cls((1.0 / n,) * n)

    @classmethod
    def parse(cls, text: str) -> "EnsembleSpec":
        """``"0.7,0.3"`` -> EnsembleSpec((0.7, 0.3))."""
        try:
            return cls(tuple(float(t) for t in text.split(",")))
        except ValueError:
            raise SpecError(f"cannot parse weights {text!r}") from None


def fuse_probs(models, spec: EnsembleSpec | None = None) -> ProbVolume:
    """Per voxel and class, the weighted sum of the model probabilities.

    Equal weights are used when ``spec`` is omitted. The sum runs in model
    order so the result is reproducible bit for bit.
    """
    models = list(models)
    if len(models) < 2:
        raise ValidationError(f"fusion needs at least 2 models, got {len(models)}")
    spec = spec or EnsembleSpec.equal(len(models))
    if len(spec.weights) != len(models):
        raise SpecError(f"{len(spec.weights)} weights for {len(models)} models")
    ref = models[0]
    for i, m in enumerate(models[1:], 2):
        require_compatible(ref.geometry, m.geometry, f"model 1 and model {i}")
        if m.classes != ref.classes:
            raise GeometryMismatchError(f"model {i} has {m.classes} classes, model 1 has {ref.classes}")
    out = np.zeros_like(ref.probs)
    for w, m in zip(spec.weights, models):
        out += w * m.probs
    return ProbVolume(ref.geometry, out)


def argmax_labels(prob: ProbVolume, schema: LabelSchema = PED2025) -> LabelVolume:
    """Class of highest probability per voxel; ties go to the lowest class index.

    Class 0 is background and class ``i`` maps to ``schema.codes[i - 1]``.
    """
    codes = schema.codes
    if prob.classes != len(codes) + 1:
        raise SpecError(f"{prob.classes} classes do not match schema with {len(codes)} regions + background")
    lut = np.array((0,) + codes, dtype=np.int64)
    return LabelVolume(prob.geometry, lut[np.argmax(prob.probs, axis=3)], schema)
