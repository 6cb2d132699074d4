"""Nonsubsampled contourlet transform: one pyramid level, four directions.

Nothing is decimated, so every output has the input size. Complements are
formed by subtraction, which makes the decomposition exactly additive::

    slice == lowpass + bandpass
    bandpass == directions[0] + directions[1] + directions[2] + directions[3]

Direction ``k`` collects energy whose wave vector points near ``45*k``
degrees, measured from the column axis toward increasing row index
(0 = near-horizontal, 1 = +45, 2 = near-vertical, 3 = -45).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .exceptions import ValidationError
from .filters import NsctKernels, load_nsct_kernels
from .volgrid import ScalarVolume

N_DIRECTIONS = 4
DIRECTION_ANGLES_DEG = (0.0, 45.0, 90.0, 135.0)


@dataclass(frozen=True, eq=False)
class NsctSet:
    lowpass: np.ndarray
    bandpass: np.ndarray
    directions: tuple


def _check_finite(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValidationError(f"{what}: expected a 2-D grid, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{what}: non-finite values")
    return x


def _smooth(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # 'reflect' in scipy.ndimage is half-sample symmetric extension
    y = ndimage.correlate1d(x, taps, axis=0, mode="reflect")
    return ndimage.correlate1d(y, taps, axis=1, mode="reflect")


def _conv2_symmetric(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D convolution over axes 0/1 with half-sample symmetric borders."""
    r = kernel.shape[0] // 2
    pad = ((r, r), (r, r)) + ((0, 0),) * (x.ndim - 2)
    xp = np.pad(x, pad, mode="symmetric")
    k = kernel.reshape(kernel.shape + (1,) * (x.ndim - 2))
    return fftconvolve(xp, k, mode="valid", axes=(0, 1))


def nsp_split(slice_: np.ndarray, kernels: NsctKernels | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Pyramid split into a smoothed image and its complement."""
    x = _check_finite(slice_, "nsp_split")
    k = kernels or load_nsct_kernels()
    low = _smooth(x, k.pyramid_lowpass)
    return low, x - low


def nsdfb_split(bandpass: np.ndarray, kernels: NsctKernels | None = None) -> list[np.ndarray]:
    """Two-level fan filter tree giving four directional images."""
    b = _check_finite(bandpass, "nsdfb_split")
    k = kernels or load_nsct_kernels()
    fan = _conv2_symmetric(b, k.fan_level1)
    rest = b - fan
    near_horizontal = _conv2_symmetric(fan, k.fan_level2)
    minus_45 = fan - near_horizontal
    plus_45 = _conv2_symmetric(rest, k.fan_level2)
    near_vertical = rest - plus_45
    return [near_horizontal, plus_45, near_vertical, minus_45]


def nsct_forward(slice_: np.ndarray, kernels: NsctKernels | None = None) -> NsctSet:
    k = kernels or load_nsct_kernels()
    low, band = nsp_split(slice_, k)
    return NsctSet(low, band, tuple(nsdfb_split(band, k)))


def extract_hf(vol: ScalarVolume, kernels: NsctKernels | None = None) -> list[ScalarVolume]:
    """Four directional high-frequency volumes (HF1..HF4), slice by slice.

    The ``[:, :, k]`` planes are processed independently; all filtering runs
    over axes 0 and 1 only, so batching the stack does not couple slices.
    """
    k = kernels or load_nsct_kernels()
    _, band = nsp_split(vol.data, k)
    return [vol.like(d) for d in nsdfb_split(band, k)]
