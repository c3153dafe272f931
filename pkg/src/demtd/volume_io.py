"""Volume and mask containers plus their on-disk format.

A volume is stored as two files sharing a stem: ``<stem>.json`` holds the
header (``dims``, ``spacing``, ``dtype`` and an optional ``metadata`` map) and
``<stem>.raw`` holds the little-endian payload in x-fastest order.  In memory
the samples are a ``(nx, ny, nz)`` array indexed ``data[x, y, z]``, so the
x-fastest layout is Fortran order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from demtd.errors import EmptyMask, HeaderParse, MissingFile, NonBinary, NonFinite, SizeMismatch, BadParam, DimMismatch

DTYPES = {"f32le": np.dtype("<f4"), "u8": np.dtype("u1")}
DEFAULT_MARGIN = 3


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


def _check_dims(dims) -> tuple[int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise BadParam(f"dims must be three positive integers, got {dims}")
    return dims


@dataclass(frozen=True, eq=False)
class Volume3D:
    """3D scalar image with voxel spacing in millimetres."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise BadParam(f"volume data must be 3D, got shape {data.shape}")
        _check_dims(data.shape)
        if not np.all(np.isfinite(data)):
            raise NonFinite("volume contains NaN or Inf samples")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in spacing):
            raise BadParam(f"spacing must be three positive reals, got {self.spacing}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    def __eq__(self, other):
        if not isinstance(other, Volume3D):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.metadata == other.metadata
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True, eq=False)
class MaskROI:
    """Binary region of interest on the lattice of a paired volume."""

    data: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.ndim != 3:
            raise BadParam(f"mask data must be 3D, got shape {raw.shape}")
        _check_dims(raw.shape)
        if raw.dtype != bool and not np.all((raw == 0) | (raw == 1)):
            raise NonBinary("mask samples must be 0 or 1")
        object.__setattr__(self, "data", _frozen(raw.astype(bool)))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def __eq__(self, other):
        if not isinstance(other, MaskROI):
            return NotImplemented
        return self.metadata == other.metadata and np.array_equal(self.data, other.data)


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix in (".json", ".raw"):
        path = path.with_suffix("")
    return path.with_name(path.name + ".json"), path.with_name(path.name + ".raw")


def _read_header(header_path: Path) -> dict:
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise HeaderParse(f"{header_path}: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderParse(f"{header_path}: header must be a JSON object")
    try:
        dims = _check_dims(header["dims"])
        spacing = tuple(float(s) for s in header.get("spacing", (1.0, 1.0, 1.0)))
        dtype = header["dtype"]
    except (KeyError, TypeError, ValueError, BadParam) as exc:
        raise HeaderParse(f"{header_path}: {exc}") from exc
    if dtype not in DTYPES:
        raise HeaderParse(f"{header_path}: unknown dtype {dtype!r}")
    if len(spacing) != 3:
        raise HeaderParse(f"{header_path}: spacing must have three entries")
    metadata = header.get("metadata", {})
    if not isinstance(metadata, dict):
        raise HeaderParse(f"{header_path}: metadata must be an object")
    return {"dims": dims, "spacing": spacing, "dtype": dtype, "metadata": metadata}


def _read(path, expected_dtype: str) -> tuple[dict, np.ndarray]:
    header_path, raw_path = _paths(path)
    for p in (header_path, raw_path):
        if not p.is_file():
            raise MissingFile(f"no such file: {p}")
    header = _read_header(header_path)
    if header["dtype"] != expected_dtype:
        raise HeaderParse(f"{header_path}: expected dtype {expected_dtype!r}, got {header['dtype']!r}")
    dtype = DTYPES[expected_dtype]
    payload = raw_path.read_bytes()
    n = int(np.prod(header["dims"]))
    if len(payload) != n * dtype.itemsize:
        raise SizeMismatch(
            f"{raw_path}: {len(payload)} bytes, header implies {n} samples x {dtype.itemsize} bytes"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(header["dims"], order="F")
    return header, data


def _write(path, dtype_tag: str, dims, data: np.ndarray, spacing=None, metadata=None) -> Path:
    header_path, raw_path = _paths(path)
    header = {"dims": list(dims), "dtype": dtype_tag}
    if spacing is not None:
        header["spacing"] = list(spacing)
    if metadata:
        header["metadata"] = metadata
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    raw_path.write_bytes(np.ascontiguousarray(data.astype(DTYPES[dtype_tag]).ravel(order="F")).tobytes())
    return header_path


def load_volume(path) -> Volume3D:
    header, data = _read(path, "f32le")
    if not np.all(np.isfinite(data)):
        raise NonFinite(f"{path}: NaN or Inf sample encountered")
    return Volume3D(data, header["spacing"], header["metadata"])


def save_volume(volume: Volume3D, path) -> Path:
    return _write(path, "f32le", volume.dims, volume.data, volume.spacing, volume.metadata)


def load_mask(path) -> MaskROI:
    header, data = _read(path, "u8")
    if np.any(data > 1):
        raise NonBinary(f"{path}: mask sample outside {{0, 1}}")
    return MaskROI(data, header["metadata"])


def save_mask(mask: MaskROI, path, spacing=None) -> Path:
    return _write(path, "u8", mask.dims, mask.data, spacing, mask.metadata)


def save_labels(labels: np.ndarray, path, spacing=None, metadata=None) -> Path:
    """Write an integer label map (values 0..255) in the u8 mask format."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise BadParam("label maps written as u8 need values in 0..255")
    return _write(path, "u8", labels.shape, labels, spacing, metadata)


def save_array(values: np.ndarray, path, spacing=None, metadata=None) -> Path:
    """Write a float field (e.g. an invariant map) in the f32le volume format."""
    values = np.asarray(values)
    return _write(path, "f32le", values.shape, values, spacing, metadata)


def roi_bounds(mask: MaskROI, margin: int = DEFAULT_MARGIN) -> tuple[slice, slice, slice]:
    if margin < 0:
        raise BadParam("margin must be nonnegative")
    idx = np.nonzero(mask.data)
    if idx[0].size == 0:
        raise EmptyMask("mask has no set voxels")
    return tuple(
        slice(max(int(i.min()) - margin, 0), min(int(i.max()) + margin + 1, n))
        for i, n in zip(idx, mask.dims)
    )


def crop_to_roi(volume: Volume3D, mask: MaskROI, margin: int = DEFAULT_MARGIN) -> tuple[Volume3D, MaskROI]:
    """Crop both inputs to the mask's bounding box dilated by ``margin`` voxels.

    The margin keeps voxels just outside the contour so derivative stencils
    centred on boundary voxels see real image data.
    """
    if volume.dims != mask.dims:
        raise DimMismatch(f"volume dims {volume.dims} != mask dims {mask.dims}")
    box = roi_bounds(mask, margin)
    return (
        Volume3D(volume.data[box], volume.spacing, volume.metadata),
        MaskROI(mask.data[box], mask.metadata),
    )
