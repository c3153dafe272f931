"""Co-occurrence matrices over 13 directions and the 364-value descriptor.

GLCMs are symmetric (each voxel pair counted in both orders), use a
one-voxel offset and only count pairs whose two endpoints are both inside the
mask.  Each normalised matrix yields the 28 measures of ``MEASURES``; the
descriptor concatenates them direction-major: block ``k`` (28 values) belongs
to ``DIRECTIONS[k]``.
"""

from __future__ import annotations

import numpy as np

from demtd.errors import DimMismatch, NoValidPairs
from demtd.invariants import InvariantMap, invariant_map
from demtd.suppression import EXCLUDED, GRAY_LEVELS, quantize, suppress
from demtd.volume_io import MaskROI, Volume3D
from demtd import haralick

DIRECTIONS = (
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, -1, 0),
    (1, 0, 1),
    (1, 0, -1),
    (0, 1, 1),
    (0, 1, -1),
    (1, 1, 1),
    (1, 1, -1),
    (1, -1, 1),
    (-1, 1, 1),
)
MEASURES = haralick.MEASURE_NAMES
N_DIRECTIONS = len(DIRECTIONS)
N_MEASURES = len(MEASURES)
N_FEATURES = N_DIRECTIONS * N_MEASURES


def directions_13() -> tuple[tuple[int, int, int], ...]:
    return DIRECTIONS


def feature_names() -> list[str]:
    return [f"d{k:02d}_{name}" for k in range(N_DIRECTIONS) for name in MEASURES]


def canonical_direction(d) -> tuple[int, int, int]:
    """Return whichever of ``d`` and ``-d`` belongs to ``DIRECTIONS``."""
    d = tuple(int(c) for c in d)
    if d in DIRECTIONS:
        return d
    neg = tuple(-c for c in d)
    if neg in DIRECTIONS:
        return neg
    raise ValueError(f"{d} is not a nearest-neighbour offset")


def direction_permutation(axes) -> list[int]:
    """Block order induced by transposing the volume with ``np.transpose(axes)``.

    Entry ``k`` is the index of the original direction whose GLCM equals the
    transposed volume's GLCM along ``DIRECTIONS[k]``.
    """
    out = []
    for d in DIRECTIONS:
        # new axis a is old axis axes[a]
        old = [0, 0, 0]
        for a, c in enumerate(d):
            old[axes[a]] = c
        out.append(DIRECTIONS.index(canonical_direction(old)))
    return out


def _pair_slices(shape, d):
    src, dst = [], []
    for n, c in zip(shape, d):
        if c >= 0:
            src.append(slice(0, n - c))
            dst.append(slice(c, n))
        else:
            src.append(slice(-c, n))
            dst.append(slice(0, n + c))
    return tuple(src), tuple(dst)


def glcm_counts(labels: np.ndarray, mask, d, levels: int) -> np.ndarray:
    """Symmetric integer co-occurrence counts for offset ``d``."""
    labels = np.asarray(labels)
    m = np.asarray(getattr(mask, "data", mask), dtype=bool) if mask is not None else labels != EXCLUDED
    if m.shape != labels.shape:
        raise DimMismatch(f"mask dims {m.shape} != label dims {labels.shape}")
    src, dst = _pair_slices(labels.shape, d)
    valid = m[src] & m[dst]
    a = labels[src][valid].astype(np.int64)
    b = labels[dst][valid].astype(np.int64)
    if a.size and (min(a.min(), b.min()) < 0 or max(a.max(), b.max()) >= levels):
        raise ValueError(f"labels must lie in 0..{levels - 1} inside the mask")
    counts = np.bincount(a * levels + b, minlength=levels * levels).reshape(levels, levels)
    return counts + counts.T


def build_glcm(labels: np.ndarray, mask, d, levels: int) -> np.ndarray:
    counts = glcm_counts(labels, mask, d, levels)
    total = counts.sum()
    if total == 0:
        raise NoValidPairs(f"no voxel pair with both ends in the mask along {tuple(d)}")
    return counts / total


def haralick_28(p: np.ndarray) -> np.ndarray:
    return haralick.measures(p)


def descriptor_from_labels(labels: np.ndarray, mask, levels: int) -> np.ndarray:
    blocks = [haralick.measures(build_glcm(labels, mask, d, levels)) for d in DIRECTIONS]
    return np.concatenate(blocks)


def descriptor_from_map(inv: InvariantMap, n: int, levels: int, allowed=GRAY_LEVELS) -> np.ndarray:
    """Suppress, quantize and describe a precomputed invariant map."""
    q = suppress(inv.E, n)
    labels = quantize(q, inv.mask, levels, allowed)
    return descriptor_from_labels(labels, inv.mask, levels)


def demtd_features(
    volume: Volume3D,
    mask: MaskROI,
    n: int,
    levels: int,
    alpha: float = 1.0,
    window: int = 7,
    border: int = 3,
    allowed=GRAY_LEVELS,
) -> np.ndarray:
    """Full descriptor: invariant map -> suppression -> labels -> 13 x 28 measures."""
    if volume.dims != mask.dims:
        raise DimMismatch(f"volume dims {volume.dims} != mask dims {mask.dims}")
    inv = invariant_map(volume, mask, alpha=alpha, window=window, border=border)
    return descriptor_from_map(inv, n, levels, allowed)
