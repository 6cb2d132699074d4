"""Normalisation, patch extraction and the per-case 4 -> 20 channel decomposition."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dtcwt import DEFAULT_LEVELS, extract_lf
from .exceptions import DecompositionError, DegenerateInputError, SpecError, ValidationError
from .filters import DtcwtFilters, NsctKernels
from .nsct import extract_hf
from .volgrid import ScalarVolume, geometry_compatible

MODALITIES = ("t1n", "t1c", "t2w", "t2f")
BANDS = ("lf", "hf1", "hf2", "hf3", "hf4")
CHANNEL_NAMES = tuple(f"{m}_{b}" for m in MODALITIES for b in BANDS)

ZSCORE_MODES = ("nonzero", "all")
_MODE_ALIASES = {"nonzero-mask": "nonzero", "all-voxels": "all"}
STD_FLOOR = 1e-12

# patch sizes used for the two training set-ups
NNUNET_PATCH = (96, 160, 160)
CUBIC_PATCH = (128, 128, 128)


# ---------------------------------------------------------------------------
# Z-score
# ---------------------------------------------------------------------------


def zscore_stats(data: np.ndarray, mode: str = "nonzero") -> tuple[float, float, np.ndarray]:
    """Mean, population std and the voxel selection used for normalisation."""
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in ZSCORE_MODES:
        raise ValidationError(f"zscore mode must be one of {ZSCORE_MODES}, got {mode!r}")
    select = data != 0 if mode == "nonzero" else np.ones(data.shape, dtype=bool)
    if not select.any():
        raise DegenerateInputError("z-score selection is empty (volume has no nonzero voxels)")
    values = data[select]
    return float(values.mean()), float(values.std()), select


def apply_zscore(data: np.ndarray, mean: float, std: float, select: np.ndarray) -> np.ndarray:
    out = np.zeros_like(data, dtype=np.float64)
    if std >= STD_FLOOR:
        out[select] = (data[select] - mean) / std
    return out


def zscore(vol: ScalarVolume, mode: str = "nonzero") -> ScalarVolume:
    """Zero-mean, unit-std rescaling over the selected voxels.

    ``mode="nonzero"`` normalises over voxels that are nonzero (the brain in a
    skull-stripped scan) and leaves the rest at 0; ``mode="all"`` uses every
    voxel. A selection with std below 1e-12 maps to all zeros.
    """
    mean, std, select = zscore_stats(vol.data, mode)
    return vol.like(apply_zscore(vol.data, mean, std, select))


# ---------------------------------------------------------------------------
# Patches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatchSpec:
    size: tuple[int, int, int]
    mode: str = "centered"
    seed: int | None = None
    pad_value: float = 0.0

    def __post_init__(self):
        size = tuple(int(s) for s in self.size)
        if self.mode == "seeded-random":
            object.__setattr__(self, "mode", "random")
        if len(size) != 3 or any(s < 1 for s in size):
            raise SpecError(f"patch size must be three positive integers, got {self.size}")
        if self.mode not in ("centered", "random"):
            raise SpecError(f"patch mode must be 'centered' or 'random', got {self.mode!r}")
        if self.mode == "random" and self.seed is None:
            raise SpecError("random patch mode requires a seed")
        object.__setattr__(self, "size", size)


def patch_origin(dims, spec: PatchSpec) -> tuple[int, ...]:
    """Start index of the patch along each axis (negative where padding is needed).

    Random mode draws crop offsets from numpy's PCG64 generator seeded with
    ``spec.seed``; axes shorter than the patch are always centred.
    """
    rng = np.random.default_rng(spec.seed) if spec.mode == "random" else None
    origin = []
    for n, s in zip(dims, spec.size):
        if n >= s:
            start = int(rng.integers(0, n - s + 1)) if rng is not None else (n - s) // 2
        else:
            start = -((s - n) // 2)
        origin.append(start)
    return tuple(origin)


def extract_patch(vol: ScalarVolume, spec: PatchSpec) -> ScalarVolume:
    """Crop (or symmetrically pad with ``pad_value``) to exactly ``spec.size``."""
    origin = patch_origin(vol.geometry.dims, spec)
    out = np.full(spec.size, spec.pad_value, dtype=np.float64)
    src, dst = [], []
    for start, n, s in zip(origin, vol.geometry.dims, spec.size):
        lo = max(start, 0)
        hi = min(start + s, n)
        src.append(slice(lo, hi))
        dst.append(slice(lo - start, hi - start))
    out[tuple(dst)] = vol.data[tuple(src)]
    return ScalarVolume(vol.geometry.with_dims(spec.size, origin), out)


# ---------------------------------------------------------------------------
# Case decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CaseBundle:
    case_id: str
    modalities: Mapping[str, ScalarVolume] = field(default_factory=dict)

    def __post_init__(self):
        mods = {str(k).lower(): v for k, v in self.modalities.items()}
        if mods.keys() != set(MODALITIES):
            missing = sorted(set(MODALITIES) - mods.keys())
            extra = sorted(mods.keys() - set(MODALITIES))
            raise ValidationError(f"case {self.case_id}: missing modalities {missing}, unexpected {extra}")
        ref = mods[MODALITIES[0]].geometry
        for name in MODALITIES[1:]:
            if not geometry_compatible(ref, mods[name].geometry):
                raise ValidationError(f"case {self.case_id}: {name} grid differs from {MODALITIES[0]}")
        object.__setattr__(self, "modalities", {m: mods[m] for m in MODALITIES})


def decompose_modality(
    name: str,
    vol: ScalarVolume,
    levels: int = DEFAULT_LEVELS,
    dtcwt_filters: DtcwtFilters | None = None,
    nsct_kernels: NsctKernels | None = None,
) -> dict[str, ScalarVolume]:
    try:
        lf = extract_lf(vol, levels, dtcwt_filters)
        hf = extract_hf(vol, nsct_kernels)
    except Exception as exc:
        raise DecompositionError(f"decomposition of {name} failed: {exc}") from exc
    out = {f"{name}_lf": lf}
    out.update({f"{name}_hf{i}": v for i, v in enumerate(hf, 1)})
    return out


def decompose_case(
    bundle: CaseBundle,
    levels: int = DEFAULT_LEVELS,
    dtcwt_filters: DtcwtFilters | None = None,
    nsct_kernels: NsctKernels | None = None,
    n_jobs: int = 1,
) -> dict[str, ScalarVolume]:
    """20 channels: ``<mod>_lf`` and ``<mod>_hf1..4`` for each of the four modalities."""
    def run(name):
        return decompose_modality(name, bundle.modalities[name], levels, dtcwt_filters, nsct_kernels)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(run, MODALITIES))
    else:
        parts = [run(m) for m in MODALITIES]
    channels: dict[str, ScalarVolume] = {}
    for part in parts:
        channels.update(part)
    return {name: channels[name] for name in CHANNEL_NAMES}
