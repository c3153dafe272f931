"""Root-atan signal suppression and linear gray-level quantization.

``suppress`` maps E to ``atan(1 / E**(1/n))`` on the nonnegative branch and
``-atan(1 / |E|**(1/n))`` on the negative one, with E = 0 sent to pi/2.  Large
responses collapse towards 0, weak ones are pushed out towards +-pi/2, and the
mapping stays one-to-one.
"""

from __future__ import annotations

import numpy as np

from demtd.errors import BadParam, DimMismatch, EmptyMask

GRAY_LEVELS = tuple(range(16, 129, 8))
ROOT_POWERS = tuple(range(1, 10))
EXCLUDED = -1


def check_root_power(n: int) -> int:
    if int(n) != n or n < 1:
        raise BadParam(f"root power must be a positive integer, got {n}")
    return int(n)


def check_levels(levels: int, allowed=GRAY_LEVELS) -> int:
    if allowed is not None and levels not in allowed:
        raise BadParam(f"gray levels must be one of {list(allowed)}, got {levels}")
    if int(levels) != levels or levels < 1:
        raise BadParam(f"gray levels must be a positive integer, got {levels}")
    return int(levels)


def suppress(E, n: int = 1):
    n = check_root_power(n)
    E = np.asarray(E, dtype=np.float64)
    root = np.abs(E) ** (1.0 / n)
    with np.errstate(divide="ignore"):
        q = np.arctan(1.0 / root)
    # atan(1/0) = atan(inf) = pi/2 already; keep it on the nonnegative branch
    q = np.where(E < 0, -q, q)
    if q.ndim == 0:
        return float(q)
    return q


def _mask_array(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(getattr(mask, "data", mask), dtype=bool)
    if m.shape != tuple(shape):
        raise DimMismatch(f"mask dims {m.shape} != map dims {tuple(shape)}")
    return m


def quantize(q: np.ndarray, mask=None, levels: int = 16, allowed=GRAY_LEVELS) -> np.ndarray:
    """Linearly rescale masked values onto integer labels ``0..levels-1``.

    Min and max are taken over the masked voxels only.  Unmasked voxels get
    ``EXCLUDED`` (-1).  ``allowed=None`` lifts the restriction to the
    16..128 level grid (used by tests and displays).
    """
    levels = check_levels(levels, allowed)
    q = np.asarray(q, dtype=np.float64)
    m = _mask_array(mask, q.shape)
    if not m.any():
        raise EmptyMask("mask has no set voxels")
    vals = q[m]
    lo, hi = vals.min(), vals.max()
    labels = np.full(q.shape, EXCLUDED, dtype=np.int64)
    if hi == lo:
        labels[m] = 0
        return labels
    scaled = np.floor((vals - lo) / (hi - lo) * levels).astype(np.int64)
    labels[m] = np.minimum(scaled, levels - 1)
    return labels


def histogram(labels: np.ndarray, bins: int, levels: int | None = None) -> np.ndarray:
    """Probability of each bin over non-excluded voxels.

    When ``bins`` differs from ``levels`` the labels are rebinned
    proportionally (``label * bins // levels``).
    """
    labels = np.asarray(labels)
    vals = labels[labels != EXCLUDED]
    if vals.size == 0:
        raise EmptyMask("label map has no masked voxels")
    if bins < 1:
        raise BadParam("bins must be positive")
    if levels is not None and levels != bins:
        vals = vals * bins // levels
    if vals.max() >= bins:
        raise BadParam(f"label {int(vals.max())} does not fit in {bins} bins")
    counts = np.bincount(vals, minlength=bins).astype(np.float64)
    return counts / counts.sum()
