"""Filter coefficient tables for the DTCWT and NSCT.

Tables ship as ``data/filters_v1.txt``; set ``FREQSEG_FILTERS`` (or pass a
path) to load a different file with the same section names.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ValidationError

FILTERS_ENV = "FREQSEG_FILTERS"
SUM_TOL = 1e-8
SQRT2 = np.sqrt(2.0)


def default_filter_path() -> Path:
    override = os.environ.get(FILTERS_ENV)
    if override:
        return Path(override)
    return Path(str(resources.files("freqseg") / "data" / "filters_v1.txt"))


def parse_tables(text: str, source: str = "<tables>") -> dict[str, np.ndarray]:
    tables: dict[str, np.ndarray] = {}
    name, shape, values = None, None, []

    def flush():
        if name is None:
            return
        if shape is None:
            raise ValidationError(f"{source}: section [{name}] lacks a shape line")
        if len(values) != int(np.prod(shape)):
            raise ValidationError(
                f"{source}: section [{name}] has {len(values)} coefficients, shape {shape} needs {int(np.prod(shape))}"
            )
        tables[name] = np.array(values, dtype=float).reshape(shape)

    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("version"):
            continue
        if line.startswith("["):
            flush()
            name, shape, values = line.strip("[]"), None, []
        elif line.startswith("shape"):
            shape = tuple(int(s) for s in line.split()[1:])
        else:
            try:
                values.append(float(line))
            except ValueError:
                raise ValidationError(f"{source}:{lineno}: cannot parse {line!r}") from None
    flush()
    return tables


@dataclass(frozen=True, eq=False)
class FilterPair:
    """Lowpass/highpass pair for one tree and one direction (analysis or synthesis).

    Coefficients are stored with the orthonormal normalisation: the lowpass
    sums to sqrt(2) and the highpass to 0.
    """

    lowpass: np.ndarray
    highpass: np.ndarray
    role: str

    def __post_init__(self):
        if abs(self.lowpass.sum() - SQRT2) > SUM_TOL:
            raise ValidationError(f"{self.role}: lowpass sums to {self.lowpass.sum()!r}, expected sqrt(2)")
        if abs(self.highpass.sum()) > SUM_TOL:
            raise ValidationError(f"{self.role}: highpass sums to {self.highpass.sum()!r}, expected 0")


@dataclass(frozen=True, eq=False)
class DtcwtFilters:
    level1_analysis: FilterPair
    level1_synthesis: FilterPair
    qshift_a_analysis: FilterPair
    qshift_b_analysis: FilterPair
    qshift_a_synthesis: FilterPair
    qshift_b_synthesis: FilterPair


@dataclass(frozen=True, eq=False)
class NsctKernels:
    """Pyramid smoother (separable, 1-D taps) and the two fan kernels."""

    pyramid_lowpass: np.ndarray
    fan_level1: np.ndarray
    fan_level2: np.ndarray

    def __post_init__(self):
        if abs(self.pyramid_lowpass.sum() - 1.0) > SUM_TOL:
            raise ValidationError("pyramid lowpass must have unit DC gain")
        for name in ("fan_level1", "fan_level2"):
            k = getattr(self, name)
            if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[0] != k.shape[1]:
                raise ValidationError(f"{name} must be a square kernel of odd size, got {k.shape}")


def _pair(tables, prefix, role) -> FilterPair:
    try:
        return FilterPair(tables[prefix + ".lowpass"], tables[prefix + ".highpass"], role)
    except KeyError as exc:
        raise ValidationError(f"filter table missing section {exc}") from None


@lru_cache(maxsize=8)
def _load(path: str) -> tuple[DtcwtFilters, NsctKernels]:
    tables = parse_tables(Path(path).read_text(), path)
    dt = DtcwtFilters(
        level1_analysis=_pair(tables, "dtcwt.level1.analysis", "level-1 analysis"),
        level1_synthesis=_pair(tables, "dtcwt.level1.synthesis", "level-1 synthesis"),
        qshift_a_analysis=_pair(tables, "dtcwt.qshift.tree_a.analysis", "q-shift tree-A analysis"),
        qshift_b_analysis=_pair(tables, "dtcwt.qshift.tree_b.analysis", "q-shift tree-B analysis"),
        qshift_a_synthesis=_pair(tables, "dtcwt.qshift.tree_a.synthesis", "q-shift tree-A synthesis"),
        qshift_b_synthesis=_pair(tables, "dtcwt.qshift.tree_b.synthesis", "q-shift tree-B synthesis"),
    )
    try:
        ns = NsctKernels(
            tables["nsct.pyramid.lowpass"], tables["nsct.fan.level1"], tables["nsct.fan.level2"]
        )
    except KeyError as exc:
        raise ValidationError(f"filter table missing section {exc}") from None
    return dt, ns


def load_dtcwt_filters(path=None) -> DtcwtFilters:
    return _load(str(path or default_filter_path()))[0]


def load_nsct_kernels(path=None) -> NsctKernels:
    return _load(str(path or default_filter_path()))[1]
