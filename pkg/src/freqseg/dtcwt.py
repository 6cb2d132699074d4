"""2-D dual-tree complex wavelet transform and low-frequency extraction.

Level 1 is an undecimated near-symmetric filter bank whose four polyphase
components form the four trees. Levels 2 and up use quarter-shift filters,
decimating by two, with tree A and tree B interleaved in a single array so
that symmetric extension maps one tree onto the other at the borders. Every
tree is a perfect-reconstruction wavelet decomposition.

Arrays are indexed ``[row, col]``. Orientation ``k`` of the six complex
subbands responds to gratings whose wave vector points at roughly
``15 + 30*k`` degrees, measured from the column axis toward increasing row.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import StructureError, ValidationError
from .filters import DtcwtFilters, SQRT2, load_dtcwt_filters
from .volgrid import ScalarVolume

ORIENTATIONS_DEG = (15.0, 45.0, 75.0, 105.0, 135.0, 165.0)
DEFAULT_LEVELS = 3
_SLICE_CHUNK = 16


@dataclass(frozen=True, eq=False)
class SubbandSet:
    """Complete DTCWT decomposition of one 2-D slice.

    ``oriented[k]`` has shape ``(rows_k, cols_k, 6)`` with ``rows_k`` equal to
    the padded row count divided by ``2**(k+1)``. ``lowpass_residual`` holds
    the four tree lowpass images at the coarsest scale, shape ``(4, r, c)``.
    """

    levels: int
    oriented: tuple
    lowpass_residual: np.ndarray
    original_dims: tuple[int, int]
    pad_record: tuple[tuple[int, int], tuple[int, int]]

    @property
    def padded_dims(self) -> tuple[int, int]:
        (r0, r1), (c0, c1) = self.pad_record
        return self.original_dims[0] + r0 + r1, self.original_dims[1] + c0 + c1

    def with_oriented_zeroed(self) -> "SubbandSet":
        return SubbandSet(
            self.levels,
            tuple(np.zeros_like(o) for o in self.oriented),
            self.lowpass_residual,
            self.original_dims,
            self.pad_record,
        )

    def energy(self) -> float:
        return float(
            sum(np.sum(np.abs(o) ** 2) for o in self.oriented) + np.sum(self.lowpass_residual ** 2)
        )


# ---------------------------------------------------------------------------
# 1-D filtering primitives along axis 0
# ---------------------------------------------------------------------------


def _symmetric_index(positions: np.ndarray, n: int) -> np.ndarray:
    """Map arbitrary integer positions into [0, n) by half-sample reflection."""
    period = 2 * n
    p = np.mod(positions, period)
    return np.where(p >= n, period - 1 - p, p)


def _conv_valid(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """'valid' convolution of every column of ``x`` (axis 0) with ``h``."""
    m = len(h)
    n_out = x.shape[0] - m + 1
    out = h[m - 1] * x[0:n_out]
    for k in range(m - 2, -1, -1):
        out = out + h[k] * x[m - 1 - k:m - 1 - k + n_out]
    return out


def _colfilter(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Undecimated filtering along axis 0 with an odd-length filter."""
    half = len(h) // 2
    idx = _symmetric_index(np.arange(-half, x.shape[0] + half), x.shape[0])
    return _conv_valid(x[idx], h)


def _coldfilt(x: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Filter along axis 0 with the tree pair and decimate by two.

    ``ha`` acts on one polyphase component and ``hb`` on the other; the two
    outputs are interleaved. Requires ``x.shape[0] % 4 == 0``.
    """
    r = x.shape[0]
    m = len(ha)
    idx = _symmetric_index(np.arange(-m, r + m), r)
    t = np.arange(5, r + 2 * m - 2, 4)
    out = np.empty((r // 2,) + x.shape[1:], dtype=x.dtype)
    if np.sum(ha * hb) > 0:
        first, second = slice(0, r // 2, 2), slice(1, r // 2, 2)
    else:
        first, second = slice(1, r // 2, 2), slice(0, r // 2, 2)
    out[first] = _conv_valid(x[idx[t - 1]], ha[0::2]) + _conv_valid(x[idx[t - 3]], ha[1::2])
    out[second] = _conv_valid(x[idx[t]], hb[0::2]) + _conv_valid(x[idx[t - 2]], hb[1::2])
    return out


def _colifilt(x: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Interpolating counterpart of :func:`_coldfilt` (output is twice as long)."""
    r = x.shape[0]
    m = len(ha)
    half = m // 2
    idx = _symmetric_index(np.arange(-half, r + half), r)
    hao, hae, hbo, hbe = ha[0::2], ha[1::2], hb[0::2], hb[1::2]
    out = np.empty((2 * r,) + x.shape[1:], dtype=x.dtype)
    aligned = np.sum(ha * hb) > 0
    if half % 2 == 0:
        t = np.arange(3, r + m, 2)
        ta, tb = (t, t - 1) if aligned else (t - 1, t)
        out[0::4] = _conv_valid(x[idx[tb - 2]], hae)
        out[1::4] = _conv_valid(x[idx[ta - 2]], hbe)
        out[2::4] = _conv_valid(x[idx[tb]], hao)
        out[3::4] = _conv_valid(x[idx[ta]], hbo)
    else:
        t = np.arange(2, r + m - 1, 2)
        ta, tb = (t, t - 1) if aligned else (t - 1, t)
        out[0::4] = _conv_valid(x[idx[tb]], hao)
        out[1::4] = _conv_valid(x[idx[ta]], hbo)
        out[2::4] = _conv_valid(x[idx[tb]], hae)
        out[3::4] = _conv_valid(x[idx[ta]], hbe)
    return out


def _on_rows(fn, x, *args):
    return np.swapaxes(fn(np.swapaxes(x, 0, 1), *args), 0, 1)


# ---------------------------------------------------------------------------
# Quad <-> complex conversion
# ---------------------------------------------------------------------------

_INV_SQRT2 = 1.0 / SQRT2


def _q2c(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = y[0::2, 0::2], y[0::2, 1::2]
    c, d = y[1::2, 0::2], y[1::2, 1::2]
    p = (a + 1j * b) * _INV_SQRT2
    q = (d - 1j * c) * _INV_SQRT2
    return p - q, p + q


def _c2q(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    p = (z1 + z2) * 0.5
    q = (z2 - z1) * 0.5
    shape = (2 * z1.shape[0], 2 * z1.shape[1]) + z1.shape[2:]
    y = np.empty(shape)
    y[0::2, 0::2] = p.real * SQRT2
    y[0::2, 1::2] = p.imag * SQRT2
    y[1::2, 0::2] = -q.imag * SQRT2
    y[1::2, 1::2] = q.real * SQRT2
    return y


def _pack(lohi, hilo, hihi) -> np.ndarray:
    z15, z165 = _q2c(lohi)
    z45, z135 = _q2c(hihi)
    z75, z105 = _q2c(hilo)
    return np.stack([z15, z45, z75, z105, z135, z165], axis=2)


def _unpack(bands: np.ndarray):
    b = [bands[:, :, k] for k in range(6)]
    return _c2q(b[0], b[5]), _c2q(b[2], b[3]), _c2q(b[1], b[4])


# ---------------------------------------------------------------------------
# Batched transform (axes 0 and 1 are spatial, any trailing axes are batch)
# ---------------------------------------------------------------------------


def _pad_amounts(n: int, levels: int) -> tuple[int, int]:
    block = 2 ** levels
    total = -(-n // block) * block - n
    return total // 2, total - total // 2


def _forward(x: np.ndarray, levels: int, f: DtcwtFilters):
    h0o = f.level1_analysis.lowpass / SQRT2
    h1o = f.level1_analysis.highpass / SQRT2
    lo = _on_rows(_colfilter, x, h0o)
    hi = _on_rows(_colfilter, x, h1o)
    lolo = _colfilter(lo, h0o)
    oriented = [_pack(_colfilter(hi, h0o), _colfilter(lo, h1o), _colfilter(hi, h1o))]
    a, b = f.qshift_a_analysis, f.qshift_b_analysis
    for _ in range(1, levels):
        lo = _on_rows(_coldfilt, lolo, b.lowpass, a.lowpass)
        hi = _on_rows(_coldfilt, lolo, b.highpass, a.highpass)
        lolo = _coldfilt(lo, b.lowpass, a.lowpass)
        oriented.append(
            _pack(
                _coldfilt(hi, b.lowpass, a.lowpass),
                _coldfilt(lo, b.highpass, a.highpass),
                _coldfilt(hi, b.highpass, a.highpass),
            )
        )
    residual = np.stack([lolo[0::2, 0::2], lolo[0::2, 1::2], lolo[1::2, 0::2], lolo[1::2, 1::2]])
    return oriented, residual


def _inverse(oriented, residual, f: DtcwtFilters) -> np.ndarray:
    shape = (2 * residual.shape[1], 2 * residual.shape[2]) + residual.shape[3:]
    lolo = np.empty(shape)
    lolo[0::2, 0::2], lolo[0::2, 1::2] = residual[0], residual[1]
    lolo[1::2, 0::2], lolo[1::2, 1::2] = residual[2], residual[3]
    a, b = f.qshift_a_synthesis, f.qshift_b_synthesis
    for level in range(len(oriented) - 1, 0, -1):
        lohi, hilo, hihi = _unpack(oriented[level])
        y1 = _colifilt(lolo, b.lowpass, a.lowpass) + _colifilt(hilo, b.highpass, a.highpass)
        y2 = _colifilt(lohi, b.lowpass, a.lowpass) + _colifilt(hihi, b.highpass, a.highpass)
        lolo = _on_rows(_colifilt, y1, b.lowpass, a.lowpass) + _on_rows(_colifilt, y2, b.highpass, a.highpass)
    g0o = f.level1_synthesis.lowpass / SQRT2
    g1o = f.level1_synthesis.highpass / SQRT2
    lohi, hilo, hihi = _unpack(oriented[0])
    y1 = _colfilter(lolo, g0o) + _colfilter(hilo, g1o)
    y2 = _colfilter(lohi, g0o) + _colfilter(hihi, g1o)
    return _on_rows(_colfilter, y1, g0o) + _on_rows(_colfilter, y2, g1o)


def _check_levels(levels) -> int:
    if int(levels) != levels or levels < 1:
        raise ValidationError(f"levels must be an integer >= 1, got {levels!r}")
    return int(levels)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def dtcwt_forward(slice_: np.ndarray, levels: int = DEFAULT_LEVELS, filters: DtcwtFilters | None = None) -> SubbandSet:
    """Forward 2-D DTCWT of a real image.

    Each axis is symmetrically padded up to a multiple of ``2**levels``; the
    padding is recorded so that :func:`dtcwt_inverse` returns the original size.
    """
    levels = _check_levels(levels)
    x = np.asarray(slice_, dtype=np.float64)
    if x.ndim != 2 or 0 in x.shape:
        raise ValidationError(f"expected a non-empty 2-D slice, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("slice contains non-finite values")
    f = filters or load_dtcwt_filters()
    pads = (_pad_amounts(x.shape[0], levels), _pad_amounts(x.shape[1], levels))
    xp = np.pad(x, pads, mode="symmetric")
    oriented, residual = _forward(xp, levels, f)
    return SubbandSet(levels, tuple(oriented), residual, x.shape, pads)


def _validate_structure(s: SubbandSet) -> None:
    if s.levels < 1 or len(s.oriented) != s.levels:
        raise StructureError(f"levels={s.levels} but {len(s.oriented)} oriented levels supplied")
    rows, cols = s.padded_dims
    if rows % 2 ** s.levels or cols % 2 ** s.levels:
        raise StructureError(f"padded dims {(rows, cols)} not divisible by 2**{s.levels}")
    for k, band in enumerate(s.oriented, 1):
        expected = (rows >> k, cols >> k, 6)
        if band.shape != expected:
            raise StructureError(f"level {k} subbands have shape {band.shape}, expected {expected}")
    expected = (4, rows >> s.levels, cols >> s.levels)
    if s.lowpass_residual.shape != expected:
        raise StructureError(f"lowpass residual shape {s.lowpass_residual.shape}, expected {expected}")


def dtcwt_inverse(s: SubbandSet, filters: DtcwtFilters | None = None) -> np.ndarray:
    """Inverse 2-D DTCWT, cropped back to ``s.original_dims``."""
    _validate_structure(s)
    f = filters or load_dtcwt_filters()
    y = _inverse(list(s.oriented), np.asarray(s.lowpass_residual, dtype=np.float64), f)
    (r0, _), (c0, _) = s.pad_record
    return y[r0:r0 + s.original_dims[0], c0:c0 + s.original_dims[1]]


def lowpass_stack(stack: np.ndarray, levels: int, filters: DtcwtFilters) -> np.ndarray:
    """LF image of every slice in a ``(rows, cols, n)`` stack."""
    pads = (_pad_amounts(stack.shape[0], levels), _pad_amounts(stack.shape[1], levels))
    xp = np.pad(stack, pads + ((0, 0),), mode="symmetric")
    oriented, residual = _forward(xp, levels, filters)
    y = _inverse([np.zeros_like(o) for o in oriented], residual, filters)
    (r0, _), (c0, _) = pads
    return y[r0:r0 + stack.shape[0], c0:c0 + stack.shape[1]]


def extract_lf(
    vol: ScalarVolume,
    levels: int = DEFAULT_LEVELS,
    filters: DtcwtFilters | None = None,
    n_jobs: int = 1,
) -> ScalarVolume:
    """Same-size low-frequency volume: per axial slice, drop every oriented subband.

    Slices are the ``[:, :, k]`` planes. ``n_jobs > 1`` spreads chunks of
    slices over threads; results do not depend on it.
    """
    levels = _check_levels(levels)
    f = filters or load_dtcwt_filters()
    data = vol.data
    chunks = [slice(i, min(i + _SLICE_CHUNK, data.shape[2])) for i in range(0, data.shape[2], _SLICE_CHUNK)]
    out = np.empty_like(data)

    def work(sl):
        out[:, :, sl] = lowpass_stack(data[:, :, sl], levels, f)

    if n_jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(work, chunks))
    else:
        for sl in chunks:
            work(sl)
    return vol.like(out)
