"""Minimal NIfTI-1 reader/writer.

Supports single-file NIfTI-1 (``n+1``) with uint8, int16 or float32 payloads,
3 or 4 axes, little-endian, optionally gzip-compressed. Anything else is
rejected with a typed error instead of being reinterpreted.
"""
from __future__ import annotations

import gzip
import io
import os
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    DimensionalityError,
    NiftiCorruptionError,
    NiftiFormatError,
    ValidationError,
)
from .volgrid import LabelSchema, LabelVolume, PED2025, ScalarVolume, VoxelGeometry

HEADER_SIZE = 348
DEFAULT_VOX_OFFSET = 352

HEADER_DTYPE = np.dtype([
    ("sizeof_hdr", "<i4"), ("data_type", "S10"), ("db_name", "S18"),
    ("extents", "<i4"), ("session_error", "<i2"), ("regular", "S1"),
    ("dim_info", "u1"), ("dim", "<i2", (8,)), ("intent_p1", "<f4"),
    ("intent_p2", "<f4"), ("intent_p3", "<f4"), ("intent_code", "<i2"),
    ("datatype", "<i2"), ("bitpix", "<i2"), ("slice_start", "<i2"),
    ("pixdim", "<f4", (8,)), ("vox_offset", "<f4"), ("scl_slope", "<f4"),
    ("scl_inter", "<f4"), ("slice_end", "<i2"), ("slice_code", "u1"),
    ("xyzt_units", "u1"), ("cal_max", "<f4"), ("cal_min", "<f4"),
    ("slice_duration", "<f4"), ("toffset", "<f4"), ("glmax", "<i4"),
    ("glmin", "<i4"), ("descrip", "S80"), ("aux_file", "S24"),
    ("qform_code", "<i2"), ("sform_code", "<i2"), ("quatern_b", "<f4"),
    ("quatern_c", "<f4"), ("quatern_d", "<f4"), ("qoffset_x", "<f4"),
    ("qoffset_y", "<f4"), ("qoffset_z", "<f4"), ("srow_x", "<f4", (4,)),
    ("srow_y", "<f4", (4,)), ("srow_z", "<f4", (4,)), ("intent_name", "S16"),
    ("magic", "S4"),
])
assert HEADER_DTYPE.itemsize == HEADER_SIZE

# NIfTI datatype code -> (numpy dtype, bitpix)
DATATYPES = {
    2: (np.dtype("u1"), 8),
    4: (np.dtype("<i2"), 16),
    16: (np.dtype("<f4"), 32),
}
DTYPE_NAMES = {"uint8": 2, "int16": 4, "float32": 16}


@dataclass(frozen=True)
class NiftiHeaderView:
    dims: tuple[int, ...]
    datatype: int
    spacing: tuple[float, ...]
    affine: np.ndarray
    scl_slope: float
    scl_inter: float
    gzipped: bool
    vox_offset: int

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def dtype(self) -> np.dtype:
        return DATATYPES[self.datatype][0]

    def describe(self) -> str:
        return (f"dims={self.dims} datatype={self.datatype} spacing={self.spacing} "
                f"scl_slope={self.scl_slope} scl_inter={self.scl_inter}")


# ---------------------------------------------------------------------------
# Header decoding
# ---------------------------------------------------------------------------


def _quaternion_affine(hdr, spacing) -> np.ndarray:
    b, c, d = (float(hdr[k]) for k in ("quatern_b", "quatern_c", "quatern_d"))
    a2 = 1.0 - (b * b + c * c + d * d)
    if a2 < 1e-7:
        # numerically a 180 degree rotation; renormalise (b, c, d)
        norm = np.sqrt(b * b + c * c + d * d)
        a, b, c, d = 0.0, b / norm, c / norm, d / norm
    else:
        a = np.sqrt(a2)
    rot = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ])
    qfac = -1.0 if float(hdr["pixdim"][0]) < 0 else 1.0
    scale = np.array([spacing[0], spacing[1], qfac * spacing[2]])
    affine = np.eye(4)
    affine[:3, :3] = rot * scale
    affine[:3, 3] = [float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"])]
    return affine


def _parse_header(raw: bytes, gzipped: bool, source: str) -> NiftiHeaderView:
    if len(raw) < HEADER_SIZE:
        raise NiftiCorruptionError(f"{source}: file shorter than the {HEADER_SIZE}-byte header")
    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE)[0]
    if int(hdr["sizeof_hdr"]) != HEADER_SIZE:
        swapped = int(np.frombuffer(raw[:4], dtype=">i4")[0])
        if swapped == HEADER_SIZE:
            raise NiftiFormatError(f"{source}: big-endian NIfTI is not supported")
        raise NiftiFormatError(f"{source}: sizeof_hdr={int(hdr['sizeof_hdr'])}, not a NIfTI-1 file")
    magic = bytes(hdr["magic"])
    if magic != b"n+1":
        raise NiftiFormatError(f"{source}: magic {magic!r} unsupported (need single-file 'n+1')")

    dim = [int(v) for v in hdr["dim"]]
    ndim = dim[0]
    datatype = int(hdr["datatype"])
    if ndim not in (3, 4):
        raise NiftiFormatError(f"{source}: dim[0]={ndim} unsupported (need 3 or 4); dim={dim}")
    if datatype not in DATATYPES:
        raise NiftiFormatError(
            f"{source}: datatype={datatype} bitpix={int(hdr['bitpix'])} unsupported "
            f"(need uint8=2, int16=4 or float32=16)"
        )
    if int(hdr["bitpix"]) != DATATYPES[datatype][1]:
        raise NiftiFormatError(f"{source}: bitpix={int(hdr['bitpix'])} inconsistent with datatype={datatype}")
    dims = tuple(dim[1:ndim + 1])
    if any(d < 1 for d in dims):
        raise NiftiFormatError(f"{source}: non-positive extent in dim={dim}")
    pixdim = [float(v) for v in hdr["pixdim"]]
    spacing = tuple(abs(p) for p in pixdim[1:4])
    if any(not np.isfinite(p) or p <= 0 for p in spacing):
        raise NiftiFormatError(f"{source}: pixdim={pixdim[1:4]} must be positive for spatial axes")
    vox_offset = int(float(hdr["vox_offset"]))
    if vox_offset < HEADER_SIZE:
        raise NiftiFormatError(f"{source}: vox_offset={float(hdr['vox_offset'])} inside the header")

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if not np.isfinite(slope) or slope == 0.0:
        slope = 1.0
    if not np.isfinite(inter):
        inter = 0.0

    if int(hdr["sform_code"]) > 0:
        affine = np.eye(4)
        affine[0] = hdr["srow_x"]
        affine[1] = hdr["srow_y"]
        affine[2] = hdr["srow_z"]
    elif int(hdr["qform_code"]) > 0:
        affine = _quaternion_affine(hdr, spacing)
    else:
        affine = np.diag(list(spacing) + [1.0])

    return NiftiHeaderView(dims, datatype, spacing, affine, slope, inter, gzipped, vox_offset)


def _read_bytes(path) -> tuple[bytes, bool]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw), True
        except (EOFError, OSError, zlib.error) as exc:
            raise NiftiCorruptionError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw, False


def read_header(path) -> NiftiHeaderView:
    raw, gz = _read_bytes(path)
    return _parse_header(raw, gz, str(path))


def _load(path, *expect_ndim: int) -> tuple[NiftiHeaderView, np.ndarray]:
    raw, gz = _read_bytes(path)
    view = _parse_header(raw, gz, str(path))
    if view.ndim not in expect_ndim:
        wanted = " or ".join(f"{n}D" for n in expect_ndim)
        raise DimensionalityError(
            f"{path}: expected a {wanted} file, header says {view.ndim}D ({view.describe()})"
        )
    count = int(np.prod(view.dims))
    nbytes = count * view.dtype.itemsize
    if len(raw) < view.vox_offset + nbytes:
        raise NiftiCorruptionError(
            f"{path}: payload truncated ({len(raw) - view.vox_offset} of {nbytes} bytes)"
        )
    stored = np.frombuffer(raw, dtype=view.dtype, count=count, offset=view.vox_offset)
    return view, stored.reshape(view.dims, order="F")


def _geometry(view: NiftiHeaderView, source) -> VoxelGeometry:
    try:
        return VoxelGeometry(view.dims[:3], view.spacing, view.affine)
    except ValidationError as exc:
        raise NiftiFormatError(f"{source}: inconsistent geometry ({view.describe()}): {exc}") from exc


def _scaled(view: NiftiHeaderView, stored: np.ndarray) -> np.ndarray:
    values = stored.astype(np.float64)
    if view.scl_slope != 1.0 or view.scl_inter != 0.0:
        values = values * view.scl_slope + view.scl_inter
    return values


# ---------------------------------------------------------------------------
# Public readers
# ---------------------------------------------------------------------------


def read_scalar(path) -> ScalarVolume:
    view, stored = _load(path, 3)
    values = _scaled(view, stored)
    if not np.all(np.isfinite(values)):
        raise NiftiFormatError(f"{path}: payload contains non-finite values")
    return ScalarVolume(_geometry(view, path), values)


def read_labels(path, schema: LabelSchema = PED2025) -> LabelVolume:
    view, stored = _load(path, 3)
    values = _scaled(view, stored)
    if not np.all(np.isfinite(values)) or np.any(values != np.round(values)):
        raise NiftiFormatError(f"{path}: label payload is not integer-valued after scaling")
    return LabelVolume(_geometry(view, path), values.astype(np.int64), schema)


def read_prob(path, renormalize: bool = True):
    from .fuse import ProbVolume

    view, stored = _load(path, 4)
    values = _scaled(view, stored)
    return ProbVolume.from_array(_geometry(view, path), values, renormalize=renormalize)


def read_array(path) -> tuple[VoxelGeometry, np.ndarray]:
    """Raw 3-D or 4-D payload in its stored dtype (float64 if the header rescales it)."""
    view, stored = _load(path, 3, 4)
    if view.scl_slope != 1.0 or view.scl_inter != 0.0:
        stored = _scaled(view, stored)
    return _geometry(view, path), np.array(stored)


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _header_bytes(shape, datatype: int, geometry: VoxelGeometry) -> bytes:
    hdr = np.zeros((), dtype=HEADER_DTYPE)
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    dim = np.ones(8, dtype=np.int16)
    dim[0] = len(shape)
    dim[1:len(shape) + 1] = shape
    hdr["dim"] = dim
    hdr["datatype"] = datatype
    hdr["bitpix"] = DATATYPES[datatype][1]
    pixdim = np.ones(8, dtype=np.float32)
    pixdim[1:4] = geometry.spacing
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = DEFAULT_VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm
    hdr["descrip"] = b"freqseg"
    hdr["sform_code"] = 1
    hdr["qform_code"] = 0
    hdr["srow_x"] = geometry.affine[0]
    hdr["srow_y"] = geometry.affine[1]
    hdr["srow_z"] = geometry.affine[2]
    hdr["magic"] = b"n+1"
    return hdr.tobytes() + b"\x00" * (DEFAULT_VOX_OFFSET - HEADER_SIZE)


def _is_gzip_path(path) -> bool:
    return str(path).endswith(".gz")


def _write(path, array: np.ndarray, datatype: int, geometry: VoxelGeometry) -> None:
    np_dtype = DATATYPES[datatype][0]
    payload = np.asarray(array).astype(np_dtype).tobytes(order="F")
    blob = _header_bytes(array.shape, datatype, geometry) + payload
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if _is_gzip_path(path):
        buf = io.BytesIO()
        # mtime=0 and no embedded filename keep reruns byte-identical
        with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
            gz.write(blob)
        blob = buf.getvalue()
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def _integer_payload(values: np.ndarray, datatype: int, what: str) -> np.ndarray:
    info = np.iinfo(DATATYPES[datatype][0])
    if np.any(values != np.round(values)):
        raise ValidationError(f"{what}: non-integer values cannot be stored as {DATATYPES[datatype][0]}")
    if values.size and (values.min() < info.min or values.max() > info.max):
        raise ValidationError(f"{what}: values outside [{info.min}, {info.max}]")
    return values


def write_scalar(path, vol: ScalarVolume, dtype: str = "float32") -> None:
    if dtype not in DTYPE_NAMES:
        raise ValidationError(f"unsupported dtype {dtype!r}; choose from {sorted(DTYPE_NAMES)}")
    code = DTYPE_NAMES[dtype]
    values = vol.data
    if code != 16:
        values = _integer_payload(values, code, str(path))
    _write(path, values, code, vol.geometry)


def write_labels(path, vol: LabelVolume, dtype: str | None = None) -> None:
    if dtype is None:
        dtype = "uint8" if vol.labels.max(initial=0) <= 255 else "int16"
    if dtype not in ("uint8", "int16"):
        raise ValidationError(f"labels must be written as uint8 or int16, not {dtype!r}")
    code = DTYPE_NAMES[dtype]
    _write(path, _integer_payload(vol.labels, code, str(path)), code, vol.geometry)


def write_prob(path, prob) -> None:
    _write(path, prob.probs.astype(np.float32), 16, prob.geometry)


def write_array(path, array, geometry: VoxelGeometry, dtype: str = "float32") -> None:
    """Write a 3-D or 4-D array whose first three axes match ``geometry``."""
    array = np.asarray(array)
    if dtype not in DTYPE_NAMES:
        raise ValidationError(f"unsupported dtype {dtype!r}; choose from {sorted(DTYPE_NAMES)}")
    if array.ndim not in (3, 4) or array.shape[:3] != tuple(geometry.dims):
        raise ValidationError(f"array shape {array.shape} does not fit geometry dims {geometry.dims}")
    code = DTYPE_NAMES[dtype]
    if code != 16:
        array = _integer_payload(array, code, str(path))
    _write(path, array, code, geometry)
