"""Frequency-domain MRI preprocessing, ensemble fusion and lesion-wise evaluation."""
from __future__ import annotations

__version__ = "0.1.0"

from .dtcwt import SubbandSet, dtcwt_forward, dtcwt_inverse, extract_lf
from .exceptions import (
    DecompositionError,
    FreqsegError,
    GeometryMismatchError,
    NiftiError,
    SchemaViolationError,
    SpecError,
    ValidationError,
)
from .fuse import EnsembleSpec, ProbVolume, argmax_labels, fuse_probs
from .hyper import InitSpec, ScheduleSpec, init_std, lr_at, sample_init
from .lesionmetrics import MetricConfig, dice, lesion_wise_scores, nsd
from .nsct import extract_hf, nsct_forward
from .prep import CaseBundle, PatchSpec, decompose_case, extract_patch, zscore
from .volgrid import (
    PED2025,
    BinaryMask,
    LabelSchema,
    LabelVolume,
    ScalarVolume,
    VoxelGeometry,
    compose_regions,
    geometry_compatible,
)
