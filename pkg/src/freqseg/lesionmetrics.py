"""Lesion-wise Dice and normalised surface distance over the six evaluation regions.

A lesion is a connected component of a region mask. Reference lesions are
matched to predicted components through a small dilation; predicted
components that match nothing count as false positives with score 0.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import SpecError
from .volgrid import (
    EVALUATION_REGIONS,
    BinaryMask,
    LabelSchema,
    LabelVolume,
    compose_regions,
    require_compatible,
)

CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}

# distances within this many mm of tau count as inside the tolerance; keeps
# the comparison stable against last-bit differences in the distance
TIE_EPS_MM = 1e-9


@dataclass(frozen=True)
class MetricConfig:
    connectivity: int = 26
    match_dilation_voxels: int = 1
    tau_mm: float = 0.5
    min_lesion_voxels: int = 0
    whole_region_nsd: bool = False

    def __post_init__(self):
        if self.connectivity not in CONNECTIVITY_RANK:
            raise SpecError(f"connectivity must be 6, 18 or 26, got {self.connectivity!r}")
        if not (math.isfinite(self.tau_mm) and self.tau_mm > 0):
            raise SpecError(f"tau_mm must be positive, got {self.tau_mm!r}")
        for name in ("match_dilation_voxels", "min_lesion_voxels"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise SpecError(f"{name} must be a non-negative integer, got {value!r}")


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    labels: np.ndarray
    count: int
    sizes: np.ndarray

    def mask(self, k: int) -> np.ndarray:
        return self.labels == k


@dataclass(frozen=True, eq=False)
class LesionMatch:
    ref: ComponentLabeling
    pred: ComponentLabeling
    kept: tuple[int, ...]
    assigned: dict
    false_positives: tuple[int, ...]


@dataclass(frozen=True)
class RegionScore:
    lesion_dice: float
    lesion_nsd: float
    n_ref_lesions: int
    n_pred_lesions: int
    n_false_positive_lesions: int
    region_nsd: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["region_nsd"] is None:
            del d["region_nsd"]
        return d


@dataclass(frozen=True)
class LesionReport:
    regions: dict = field(default_factory=dict)
    config: MetricConfig = field(default_factory=MetricConfig)

    def __getitem__(self, region: str) -> RegionScore:
        return self.regions[region]

    def to_dict(self) -> dict:
        return {
            "regions": {name: score.to_dict() for name, score in self.regions.items()},
            "config": asdict(self.config),
        }


def _structure(connectivity: int) -> np.ndarray:
    return ndimage.generate_binary_structure(3, CONNECTIVITY_RANK[connectivity])


def connected_components(mask: BinaryMask, connectivity: int = 26) -> ComponentLabeling:
    """Label maximal connected sets; ids follow first-voxel raster order."""
    if connectivity not in CONNECTIVITY_RANK:
        raise SpecError(f"connectivity must be 6, 18 or 26, got {connectivity!r}")
    labels, count = ndimage.label(mask.bits, structure=_structure(connectivity))
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return ComponentLabeling(labels.astype(np.int64), int(count), sizes)


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|a & b| / (|a| + |b|), with 1.0 when both are empty."""
    require_compatible(a.geometry, b.geometry, "dice masks")
    return _dice(a.bits, b.bits)


def _dice(a: np.ndarray, b: np.ndarray) -> float:
    total = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


_FACE = ndimage.generate_binary_structure(3, 1)


def surface(bits: np.ndarray) -> np.ndarray:
    """Mask voxels with a face neighbour outside the mask (the grid edge counts as outside)."""
    return bits & ~ndimage.binary_erosion(bits, structure=_FACE, border_value=0)


def _within(src: np.ndarray, dst: np.ndarray, spacing, tau: float) -> int:
    """How many ``src`` voxels lie within ``tau`` mm of some ``dst`` voxel."""
    _, idx = ndimage.distance_transform_edt(~dst, sampling=spacing, return_indices=True)
    pts = np.nonzero(src)
    sq = np.zeros(len(pts[0]))
    for axis in range(3):
        sq += ((idx[axis][pts] - pts[axis]) * spacing[axis]) ** 2
    return int(np.count_nonzero(np.sqrt(sq) <= tau + TIE_EPS_MM))


def nsd(a: BinaryMask, b: BinaryMask, tau_mm: float = 0.5) -> float:
    """Fraction of both surfaces lying within ``tau_mm`` of the other surface.

    Distances are Euclidean between voxel centres in mm. Both empty gives
    1.0; exactly one empty gives 0.0.
    """
    require_compatible(a.geometry, b.geometry, "nsd masks")
    return _nsd(a.bits, b.bits, a.geometry.spacing, tau_mm)


def _crop(*masks) -> tuple[slice, ...]:
    """Bounding box of the union plus a one-voxel margin, clipped to the grid."""
    union = np.logical_or.reduce(masks)
    box = ndimage.find_objects(union.astype(np.int8))[0]
    return tuple(slice(max(s.start - 1, 0), min(s.stop + 1, n)) for s, n in zip(box, union.shape))


def _nsd(a: np.ndarray, b: np.ndarray, spacing, tau: float) -> float:
    a_any, b_any = bool(a.any()), bool(b.any())
    if not a_any and not b_any:
        return 1.0
    if not (a_any and b_any):
        return 0.0
    # surfaces and nearest distances live inside the union's box, so cropping
    # with a margin changes nothing but the cost
    box = _crop(a, b)
    sa, sb = surface(a[box]), surface(b[box])
    hits = _within(sa, sb, spacing, tau) + _within(sb, sa, spacing, tau)
    return hits / (int(np.count_nonzero(sa)) + int(np.count_nonzero(sb)))


def _dilate_component(labels: np.ndarray, k: int, box, steps: int) -> np.ndarray:
    """Full-grid mask of component ``k`` dilated by ``steps`` 26-neighbourhood iterations."""
    lo = [max(s.start - steps, 0) for s in box]
    hi = [min(s.stop + steps, n) for s, n in zip(box, labels.shape)]
    window = tuple(slice(a, b) for a, b in zip(lo, hi))
    local = labels[window] == k
    if steps > 0:
        local = ndimage.binary_dilation(local, structure=_structure(26), iterations=steps)
    out = np.zeros(labels.shape, dtype=bool)
    out[window] = local
    return out


def lesion_match(ref: BinaryMask, pred: BinaryMask, cfg: MetricConfig | None = None) -> LesionMatch:
    cfg = cfg or MetricConfig()
    require_compatible(ref.geometry, pred.geometry, "reference and prediction")
    rl = connected_components(ref, cfg.connectivity)
    pl = connected_components(pred, cfg.connectivity)
    kept = tuple(k for k in range(1, rl.count + 1) if rl.sizes[k - 1] >= cfg.min_lesion_voxels)
    boxes = ndimage.find_objects(rl.labels)
    assigned = {}
    touched = set()
    for k in kept:
        grown = _dilate_component(rl.labels, k, boxes[k - 1], cfg.match_dilation_voxels)
        hits = np.unique(pl.labels[grown])
        hits = tuple(int(h) for h in hits if h != 0)
        assigned[k] = hits
        touched.update(hits)
    fps = tuple(j for j in range(1, pl.count + 1) if j not in touched)
    return LesionMatch(rl, pl, kept, assigned, fps)


def _region_score(ref: BinaryMask, pred: BinaryMask, cfg: MetricConfig) -> RegionScore:
    m = lesion_match(ref, pred, cfg)
    spacing = ref.geometry.spacing
    dices, nsds = [], []
    for k in m.kept:
        lesion = m.ref.labels == k
        matched = np.isin(m.pred.labels, m.assigned[k]) if m.assigned[k] else np.zeros_like(lesion)
        dices.append(_dice(lesion, matched))
        nsds.append(_nsd(lesion, matched, spacing, cfg.tau_mm))
    n_terms = len(m.kept) + len(m.false_positives)
    if n_terms == 0:
        lesion_dice = lesion_nsd = 1.0
    else:
        lesion_dice = math.fsum(dices) / n_terms
        lesion_nsd = math.fsum(nsds) / n_terms
    region_nsd = _nsd(ref.bits, pred.bits, spacing, cfg.tau_mm) if cfg.whole_region_nsd else None
    return RegionScore(
        lesion_dice=lesion_dice,
        lesion_nsd=lesion_nsd,
        n_ref_lesions=len(m.kept),
        n_pred_lesions=m.pred.count,
        n_false_positive_lesions=len(m.false_positives),
        region_nsd=region_nsd,
    )


def lesion_wise_scores(
    ref: LabelVolume,
    pred: LabelVolume,
    schema: LabelSchema | None = None,
    cfg: MetricConfig | None = None,
) -> LesionReport:
    """Per-region lesion-wise Dice and NSD for ET, NET, CC, ED, TC and WT.

    A region where neither volume has lesions scores 1.0; reference-empty
    with predicted lesions scores 0.0 (every term is a false positive).
    """
    cfg = cfg or MetricConfig()
    schema = schema or ref.schema
    require_compatible(ref.geometry, pred.geometry, "reference and prediction")
    ref_masks = compose_regions(ref, schema)
    pred_masks = compose_regions(pred, schema)
    regions = {name: _region_score(ref_masks[name], pred_masks[name], cfg) for name in EVALUATION_REGIONS}
    return LesionReport(regions, cfg)
