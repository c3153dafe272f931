"""Harris/Hessian tensors and the differential affine invariants E, F1, F2.

With ``g`` the gradient as a row vector and ``H`` the Hessian,

    E  = g H^-1 g^T      F1 = det(H - g^T g) / det(H) = 1 - E
                         F2 = det(H + g^T g) / det(H) = 1 + E

and all three are unchanged by the push-forward ``g -> g P``,
``H -> P^T H P`` for any nonsingular ``P``.  E is evaluated through the
adjugate, ``E = g adj(H) g^T / det(H)``, so a single determinant test decides
whether a voxel is singular; singular voxels get ``E = 0``.

All functions broadcast over leading axes: ``g`` is ``(..., 3)`` and ``H`` is
``(..., 3, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from demtd.derivatives import GradientField, HessianField, deriche_hessian, sobel_gradient
from demtd.errors import BadParam, DimMismatch, EmptyMask, SingularH, SingularP
from demtd.volume_io import MaskROI, Volume3D

SINGULAR_SCALE = 1e-12
SINGULAR_FLOOR = 1e-300
AFFINE_DET_MIN = 1e-12
EXACT_SUM_LIMIT = 2.0**52


def det3(m: np.ndarray) -> np.ndarray:
    """Determinant of ``(..., 3, 3)`` matrices by cofactor expansion."""
    return (
        m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
        - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
        + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
    )


def adjugate3(m: np.ndarray) -> np.ndarray:
    """Adjugate (transposed cofactor matrix) of ``(..., 3, 3)`` matrices."""
    a = np.empty(np.shape(m))
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != j]
            c = [k for k in range(3) if k != i]
            minor = m[..., r[0], c[0]] * m[..., r[1], c[1]] - m[..., r[0], c[1]] * m[..., r[1], c[0]]
            a[..., i, j] = minor if (i + j) % 2 == 0 else -minor
    return a


def harris_tensor(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    return g[..., :, None] * g[..., None, :]


def hybrid_tensors(G, H) -> tuple[np.ndarray, np.ndarray]:
    G = np.asarray(G, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    return H - G, H + G


def default_eps_singular(H) -> float:
    """Scale-aware singularity threshold on ``|det H|``.

    Accepts full ``(..., 3, 3)`` matrices or a ``HessianField``-style stack of
    the six stored components.
    """
    H = np.asarray(H, dtype=np.float64)
    scale = float(np.mean(np.abs(H))) if H.size else 0.0
    return max(SINGULAR_SCALE * scale**3, SINGULAR_FLOOR)


def invariant_E(g, H, eps_singular: float | None = None):
    """Return ``(E, singular)`` for gradient(s) ``g`` and Hessian(s) ``H``."""
    g = np.asarray(g, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if eps_singular is None:
        eps_singular = default_eps_singular(H)
    det = det3(H)
    singular = ~(np.abs(det) >= eps_singular)
    quad = np.einsum("...i,...ij,...j->...", g, adjugate3(H), g)
    safe_det = np.where(singular, 1.0, det)
    E = np.where(singular, 0.0, quad / safe_det)
    if E.ndim == 0:
        return float(E), bool(singular)
    return E, singular


def invariants_F(E):
    """``(F1, F2) = (1 - E, 1 + E)`` with ``F1 + F2 == 2`` exactly in floating point.

    Exactness holds for ``|E| < 2**52``; beyond that neither ``1 - E`` nor
    ``2 - F1`` is representable and the sum is only correct to rounding.
    """
    E = np.asarray(E, dtype=np.float64)
    F1 = 1.0 - E
    F2 = 2.0 - F1
    # when 2 - F1 rounds, 2 - F2 is exact (Sterbenz) and restores the sum;
    # F1 moves by at most one ulp of F2
    fixable = np.abs(F1) < EXACT_SUM_LIMIT
    for _ in range(4):
        bad = fixable & (F1 + F2 != 2.0)
        if not np.any(bad):
            break
        F1 = np.where(bad, 2.0 - F2, F1)
        F2 = np.where(bad, 2.0 - F1, F2)
    if F1.ndim == 0:
        return float(F1), float(F2)
    return F1, F2


def invariants_F_direct(g, H, eps_singular: float | None = None):
    """Determinant ratios ``|K1|/|H|`` and ``|K2|/|H|``."""
    g = np.asarray(g, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if eps_singular is None:
        eps_singular = default_eps_singular(H)
    det = det3(H)
    if np.any(~(np.abs(det) >= eps_singular)):
        raise SingularH("determinant ratio needs |det H| >= eps_singular")
    K1, K2 = hybrid_tensors(harris_tensor(g), H)
    F1 = det3(K1) / det
    F2 = det3(K2) / det
    if np.ndim(F1) == 0:
        return float(F1), float(F2)
    return F1, F2


def check_affine(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (3, 3):
        raise BadParam(f"affine map must be 3x3, got shape {P.shape}")
    if not abs(np.linalg.det(P)) > AFFINE_DET_MIN:
        raise SingularP("affine map is singular (|det P| <= 1e-12)")
    return P


def affine_pushforward(g, H, P) -> tuple[np.ndarray, np.ndarray]:
    """Transport ``(g, H)`` through the local linear map ``P``."""
    P = check_affine(P)
    g = np.asarray(g, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    return g @ P, P.T @ H @ P


@dataclass(frozen=True)
class InvariantMap:
    """Per-voxel E, F1, F2.  Voxels outside ``mask`` hold E = 0, F1 = F2 = 1."""

    E: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    singular: np.ndarray
    mask: np.ndarray
    eps_singular: float

    @property
    def dims(self):
        return self.E.shape

    def stats(self) -> dict:
        e = self.E[self.mask]
        return {
            "min": float(e.min()),
            "max": float(e.max()),
            "mean": float(e.mean()),
            "masked_voxels": int(self.mask.sum()),
            "singular_voxels": int((self.singular & self.mask).sum()),
            "eps_singular": self.eps_singular,
        }


def invariant_map_from_fields(
    grad: GradientField, hess: HessianField, mask=None, eps_singular: float | None = None
) -> InvariantMap:
    dims = tuple(grad.dims)
    if tuple(hess.dims) != dims:
        raise DimMismatch(f"gradient dims {dims} != Hessian dims {tuple(hess.dims)}")
    if mask is None:
        m = np.ones(dims, dtype=bool)
    else:
        m = np.asarray(mask.data if isinstance(mask, MaskROI) else mask, dtype=bool)
        if m.shape != dims:
            raise DimMismatch(f"mask dims {m.shape} != field dims {dims}")
    if not m.any():
        raise EmptyMask("mask has no set voxels")
    g = grad.vectors()[m]
    H = hess.matrices()[m]
    if eps_singular is None:
        eps_singular = default_eps_singular(hess.data[:, m])
    e, sing = invariant_E(g, H, eps_singular)
    E = np.zeros(dims)
    singular = np.zeros(dims, dtype=bool)
    E[m] = e
    singular[m] = sing
    F1, F2 = invariants_F(E)
    return InvariantMap(E, F1, F2, singular, m, float(eps_singular))


def invariant_map(
    volume: Volume3D,
    mask: MaskROI | None = None,
    alpha: float = 1.0,
    window: int = 7,
    border: int = 3,
    eps_singular: float | None = None,
) -> InvariantMap:
    """Sobel gradient + Deriche Hessian, then E/F1/F2 on every masked voxel."""
    grad = sobel_gradient(volume)
    hess = deriche_hessian(volume, alpha=alpha, window=window, border=border)
    return invariant_map_from_fields(grad, hess, mask, eps_singular)
