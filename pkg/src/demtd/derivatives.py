"""First- and second-order derivative fields of a volume.

Gradients use the separable 3D Sobel operator, Hessians use sampled Deriche
smoothing/derivative kernels.  Both are calibrated so polynomials of degree
two are differentiated exactly away from the border, and both work in voxel
units (spacing is ignored).  ``central_diff_oracle`` is a plain finite
difference implementation kept separate for cross-checking.

Component layout: gradients are ``(3, nx, ny, nz)`` arrays ordered x, y, z;
Hessians are ``(6, nx, ny, nz)`` arrays ordered xx, xy, xz, yy, yz, zz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from demtd.errors import BadParam, TooSmall
from demtd.volume_io import Volume3D

HESSIAN_COMPONENTS = ("xx", "xy", "xz", "yy", "yz", "zz")
# (row, col) of each stored component in the full 3x3 matrix
HESSIAN_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

SOBEL_DERIVATIVE = np.array([-1.0, 0.0, 1.0])
SOBEL_SMOOTHING = np.array([1.0, 2.0, 1.0])
# 2 (derivative support) x 4 x 4 (transverse smoothing sums)
SOBEL_NORM = 32.0


@dataclass(frozen=True)
class GradientField:
    data: np.ndarray  # (3, nx, ny, nz)

    @property
    def dims(self):
        return self.data.shape[1:]

    def vectors(self) -> np.ndarray:
        """Per-voxel gradients as an ``(nx, ny, nz, 3)`` array."""
        return np.moveaxis(self.data, 0, -1)


@dataclass(frozen=True)
class HessianField:
    data: np.ndarray  # (6, nx, ny, nz)

    @property
    def dims(self):
        return self.data.shape[1:]

    def component(self, name: str) -> np.ndarray:
        return self.data[HESSIAN_COMPONENTS.index(name)]

    def matrices(self) -> np.ndarray:
        """Expand to full symmetric ``(nx, ny, nz, 3, 3)`` matrices."""
        out = np.empty(self.dims + (3, 3), dtype=self.data.dtype)
        for c, (i, j) in enumerate(HESSIAN_INDEX):
            out[..., i, j] = self.data[c]
            out[..., j, i] = self.data[c]
        return out


def _as_array(volume) -> np.ndarray:
    arr = volume.data if isinstance(volume, Volume3D) else volume
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise BadParam(f"expected a 3D volume, got shape {arr.shape}")
    return arr


def _require_min_dims(arr: np.ndarray, minimum: int) -> None:
    if min(arr.shape) < minimum:
        raise TooSmall(f"every axis needs at least {minimum} voxels, got {arr.shape}")


def separable_correlate(arr: np.ndarray, kernels, pad: int | None = None) -> np.ndarray:
    """Correlate ``arr`` with one odd-length 1D kernel per axis.

    The input is mirror padded (edge sample not repeated) by ``pad`` voxels,
    defaulting to the largest kernel radius.  Taps are summed in a fixed order
    so the result does not depend on how the caller partitions the work.
    """
    radii = [len(k) // 2 for k in kernels]
    pad = max(radii) if pad is None else pad
    if pad < max(radii):
        raise BadParam(f"border {pad} is smaller than kernel radius {max(radii)}")
    out = np.pad(arr, pad, mode="reflect")
    for axis, kernel in enumerate(kernels):
        n = out.shape[axis] - 2 * pad
        acc = np.zeros(out.shape[:axis] + (n,) + out.shape[axis + 1:])
        offset = pad - radii[axis]
        for t, w in enumerate(kernel):
            if w == 0.0:
                continue
            sl = [slice(None)] * 3
            sl[axis] = slice(offset + t, offset + t + n)
            acc += w * out[tuple(sl)]
        out = acc
    return out


def sobel_gradient(volume) -> GradientField:
    arr = _as_array(volume)
    _require_min_dims(arr, 3)
    d = SOBEL_DERIVATIVE / SOBEL_NORM
    s = SOBEL_SMOOTHING
    grads = [
        separable_correlate(arr, (d, s, s)),
        separable_correlate(arr, (s, d, s)),
        separable_correlate(arr, (s, s, d)),
    ]
    return GradientField(np.stack(grads))


def deriche_kernels(alpha: float = 1.0, window: int = 7) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sampled Deriche smoothing, first and second derivative kernels.

    The continuous smoothing response is ``(1 + a|k|) exp(-a|k|)``; the
    derivative kernels are its derivatives, sampled on ``window`` taps and
    renormalised so that, used as correlation kernels,

    * smoothing sums to 1,
    * the first derivative returns 1 on a unit ramp,
    * the second derivative sums to 0 and returns 2 on ``k**2``.
    """
    if not alpha > 0:
        raise BadParam(f"alpha must be positive, got {alpha}")
    if window < 3 or window % 2 == 0:
        raise BadParam(f"window must be an odd integer >= 3, got {window}")
    k = np.arange(window, dtype=np.float64) - window // 2
    decay = np.exp(-alpha * np.abs(k))

    smooth = (1.0 + alpha * np.abs(k)) * decay
    smooth /= smooth.sum()

    first = alpha**2 * k * decay
    first /= np.sum(k * first)

    second = alpha**2 * (alpha * np.abs(k) - 1.0) * decay
    second -= second.mean()
    second *= 2.0 / np.sum(k**2 * second)
    return smooth, first, second


def deriche_hessian(volume, alpha: float = 1.0, window: int = 7, border: int = 3) -> HessianField:
    arr = _as_array(volume)
    if border < 0:
        raise BadParam(f"border must be nonnegative, got {border}")
    s, d1, d2 = deriche_kernels(alpha, window)
    if border < window // 2:
        raise BadParam(f"border {border} cannot support a {window}-tap window")
    _require_min_dims(arr, 3)
    if min(arr.shape) + 2 * border < window:
        raise TooSmall(f"dims {arr.shape} too small for window {window} with border {border}")

    def run(kx, ky, kz):
        out = separable_correlate(arr, (kx, ky, kz), pad=border)
        trim = border - window // 2
        if trim:
            out = out[trim:-trim, trim:-trim, trim:-trim]
        return out

    comps = [
        run(d2, s, s),
        run(d1, d1, s),
        run(d1, s, d1),
        run(s, d2, s),
        run(s, d1, d1),
        run(s, s, d2),
    ]
    return HessianField(np.stack(comps))


def central_diff_oracle(volume) -> tuple[GradientField, HessianField]:
    """Brute-force finite differences with mirror padding."""
    arr = _as_array(volume)
    _require_min_dims(arr, 3)
    p = np.pad(arr, 1, mode="reflect")
    nx, ny, nz = arr.shape

    def at(dx, dy, dz):
        return p[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny, 1 + dz:1 + dz + nz]

    unit = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    grad = []
    for e in unit:
        minus = tuple(-c for c in e)
        grad.append((at(*e) - at(*minus)) / 2.0)

    hess = []
    for i, j in HESSIAN_INDEX:
        ei, ej = np.array(unit[i]), np.array(unit[j])
        if i == j:
            hess.append(at(*ei) - 2.0 * arr + at(*(-ei)))
        else:
            hess.append((at(*(ei + ej)) - at(*(ei - ej)) - at(*(ej - ei)) + at(*(-ei - ej))) / 4.0)
    return GradientField(np.stack(grad)), HessianField(np.stack(hess))


def interior(arr: np.ndarray, margin: int = 3) -> np.ndarray:
    """Slice off ``margin`` voxels on every face of the trailing three axes."""
    sl = (Ellipsis,) + (slice(margin, -margin),) * 3
    return arr[sl]
