"""Analytic phantoms and the affine deformation engine.

``AnalyticField`` is a polynomial of total degree <= 3 plus cosine waves, with
closed-form gradient and Hessian.  Coordinates are measured from the volume
centre ``(n - 1) / 2`` along every axis.  Deforming a field by ``P`` gives the
field ``u -> f(P u)``; for analytic fields this is done exactly (polynomial
substitution, wave vectors mapped by ``P^T``), for sampled volumes by
interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from demtd.derivatives import GradientField, HessianField, HESSIAN_INDEX
from demtd.errors import BadParam, TooSmall
from demtd.invariants import check_affine, invariant_E, invariant_map
from demtd.volume_io import Volume3D

INTERP_ORDER = {"trilinear": 1, "tricubic": 3}
MAX_DEGREE = 3


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = (ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2])
            out[e] = out.get(e, 0.0) + ca * cb
    return out


@dataclass(frozen=True)
class AnalyticField:
    poly: dict = field(default_factory=dict)  # (a, b, c) -> coefficient of x^a y^b z^c
    waves: tuple = ()  # (amplitude, (kx, ky, kz), phase): amplitude * cos(k . u + phase)

    def __post_init__(self):
        for e in self.poly:
            if len(e) != 3 or min(e) < 0 or sum(e) > MAX_DEGREE:
                raise BadParam(f"monomial exponent {e} outside total degree {MAX_DEGREE}")
        waves = tuple((float(a), tuple(float(k) for k in kv), float(ph)) for a, kv, ph in self.waves)
        object.__setattr__(self, "waves", waves)

    @classmethod
    def quadratic(cls, const=0.0, linear=(0.0, 0.0, 0.0), A=np.zeros((3, 3))) -> "AnalyticField":
        """``const + linear . u + 0.5 u^T A u`` for symmetric ``A``."""
        A = np.asarray(A, dtype=np.float64)
        poly = {(0, 0, 0): float(const)}
        for i in range(3):
            e = [0, 0, 0]
            e[i] = 1
            poly[tuple(e)] = float(linear[i])
        for i, j in HESSIAN_INDEX:
            e = [0, 0, 0]
            e[i] += 1
            e[j] += 1
            poly[tuple(e)] = 0.5 * A[i, i] if i == j else A[i, j]
        return cls(poly)

    def with_waves(self, waves) -> "AnalyticField":
        return AnalyticField(dict(self.poly), tuple(self.waves) + tuple(waves))

    def _monomials(self, u: np.ndarray, e, dx=(0, 0, 0)) -> np.ndarray:
        # derivative of x^a y^b z^c of multi-order dx
        coef = 1.0
        out = np.ones(u.shape[:-1])
        for axis in range(3):
            a, d = e[axis], dx[axis]
            if d > a:
                return np.zeros(u.shape[:-1])
            for t in range(d):
                coef *= a - t
            if a - d:
                out = out * u[..., axis] ** (a - d)
        return coef * out

    def _eval(self, u: np.ndarray, dx=(0, 0, 0)) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        out = np.zeros(u.shape[:-1])
        for e, c in sorted(self.poly.items()):
            if c:
                out = out + c * self._monomials(u, e, dx)
        order = sum(dx)
        for amp, k, phase in self.waves:
            k = np.asarray(k)
            arg = u @ k + phase
            # d^m/du cos(arg) cycles through -sin, -cos, sin, cos
            base = (np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t), np.sin)[order % 4](arg)
            out = out + amp * np.prod(k ** np.asarray(dx)) * base
        return out

    def value(self, u) -> np.ndarray:
        return self._eval(u)

    def gradient(self, u) -> np.ndarray:
        return np.stack([self._eval(u, d) for d in ((1, 0, 0), (0, 1, 0), (0, 0, 1))], axis=-1)

    def hessian(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        out = np.empty(u.shape[:-1] + (3, 3))
        for i, j in HESSIAN_INDEX:
            d = [0, 0, 0]
            d[i] += 1
            d[j] += 1
            out[..., i, j] = out[..., j, i] = self._eval(u, tuple(d))
        return out

    def compose(self, P) -> "AnalyticField":
        """Exact field ``u -> self(P u)``."""
        P = check_affine(P)
        rows = [{(1, 0, 0): P[i, 0], (0, 1, 0): P[i, 1], (0, 0, 1): P[i, 2]} for i in range(3)]
        poly: dict = {}
        for e, c in self.poly.items():
            term = {(0, 0, 0): c}
            for axis in range(3):
                for _ in range(e[axis]):
                    term = _poly_mul(term, rows[axis])
            for k, v in term.items():
                poly[k] = poly.get(k, 0.0) + v
        waves = tuple((a, tuple(P.T @ np.asarray(k)), ph) for a, k, ph in self.waves)
        return AnalyticField(poly, waves)


def lattice_coords(dims) -> np.ndarray:
    """Centred coordinates of every voxel as a ``(nx, ny, nz, 3)`` array."""
    axes = [np.arange(n, dtype=np.float64) - (n - 1) / 2.0 for n in dims]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def sample(field_: AnalyticField, dims) -> tuple[Volume3D, GradientField, HessianField]:
    u = lattice_coords(dims)
    H = field_.hessian(u)
    hess = np.stack([H[..., i, j] for i, j in HESSIAN_INDEX])
    return (
        Volume3D(field_.value(u)),
        GradientField(np.moveaxis(field_.gradient(u), -1, 0)),
        HessianField(hess),
    )


def quadratic_phantom(coeffs, dims=(16, 16, 16)):
    """Sample a polynomial phantom and its closed-form derivative fields.

    ``coeffs`` maps exponent triples to coefficients, e.g.
    ``{(2, 0, 0): 1, (0, 2, 0): 1, (0, 0, 2): 1}`` for ``x^2 + y^2 + z^2``.
    """
    dims = tuple(int(n) for n in dims)
    if len(dims) != 3 or min(dims) < 7:
        raise TooSmall(f"phantoms need at least 7 voxels per axis, got {dims}")
    return sample(AnalyticField(dict(coeffs)), dims)


def band_limited_phantom(dims, seed: int = 0, n_waves: int = 8, min_wavelength: float = 32.0) -> AnalyticField:
    """Sum of random cosines whose wavelengths (along their wave vector) are all >= ``min_wavelength``."""
    rng = np.random.default_rng(seed)
    kmax = 2 * np.pi / min_wavelength
    waves = []
    for _ in range(n_waves):
        amp = float(rng.normal())
        k = rng.normal(size=3)
        k *= rng.uniform(0, kmax) / np.linalg.norm(k)
        waves.append((amp, tuple(k), float(rng.uniform(0, 2 * np.pi))))
    return AnalyticField({}, tuple(waves))


def smooth_test_phantom(seed: int = 0) -> AnalyticField:
    """Positive-definite quadratic bowl plus a weak long-wavelength wave."""
    rng = np.random.default_rng(seed)
    Q = random_rotation(rng)
    A = Q @ np.diag(rng.uniform(0.5, 1.5, 3)) @ Q.T
    k = rng.uniform(-1, 1, 3)
    k *= 2 * np.pi / 40.0 / np.linalg.norm(k)
    # wave curvature amp*|k|^2 stays well below the smallest bowl eigenvalue
    return AnalyticField.quadratic(0.0, rng.normal(0, 2.0, 3), A).with_waves([(2.0, tuple(k), 0.3)])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_affine(rng: np.random.Generator, low: float = 0.8, high: float = 1.25) -> np.ndarray:
    """``U diag(s) V^T`` with random rotations and log-uniform singular values in ``[low, high]``."""
    s = np.exp(rng.uniform(np.log(low), np.log(high), 3))
    return random_rotation(rng) @ np.diag(s) @ random_rotation(rng).T


def _source_coords(dims, P: np.ndarray) -> np.ndarray:
    """Lattice index of ``c + P (v - c)`` for every output voxel ``v``; shape (3, nx, ny, nz)."""
    centre = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0
    u = lattice_coords(dims)
    return np.moveaxis(u @ P.T + centre, -1, 0)


def _interp(arr: np.ndarray, coords: np.ndarray, interp: str) -> np.ndarray:
    if interp not in INTERP_ORDER:
        raise BadParam(f"interpolation must be one of {sorted(INTERP_ORDER)}, got {interp!r}")
    return ndimage.map_coordinates(np.asarray(arr, dtype=np.float64), coords, order=INTERP_ORDER[interp], mode="mirror")


def apply_affine_deformation(volume: Volume3D, P, interp: str = "tricubic") -> Volume3D:
    """Resample so that ``I2(v) = I1(P v)`` about the volume centre."""
    P = check_affine(P)
    out = _interp(volume.data, _source_coords(volume.dims, P), interp)
    return Volume3D(out, volume.spacing, volume.metadata)


@dataclass(frozen=True)
class DeformedPair:
    I1: Volume3D
    I2: Volume3D
    P: np.ndarray
    interp: str


def deform_pair(volume: Volume3D, P, interp: str = "tricubic") -> DeformedPair:
    P = check_affine(P)
    return DeformedPair(volume, apply_affine_deformation(volume, P, interp), P, interp)


def _rel_errors(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """(relative RMS, max of |a - b| / max(1, |b|))."""
    diff = a - b
    denom = np.sqrt(np.sum(b**2))
    rms = float(np.sqrt(np.sum(diff**2)) / denom) if denom > 0 else float(np.sqrt(np.sum(diff**2)))
    return rms, float(np.max(np.abs(diff) / np.maximum(1.0, np.abs(b))))


def interior_support(dims, P: np.ndarray, margin: int) -> np.ndarray:
    """Voxels at least ``margin`` from every face whose source point is too."""
    src = _source_coords(dims, P)
    hi = np.asarray(dims, dtype=np.float64)[:, None, None, None] - 1 - margin
    ok = np.all((src >= margin) & (src <= hi), axis=0)
    inner = np.zeros(dims, dtype=bool)
    inner[margin:-margin, margin:-margin, margin:-margin] = True
    return ok & inner


def analytic_invariance(field_: AnalyticField, P, dims) -> dict:
    """E of the exactly composed field versus E of the original at ``P u``."""
    P = check_affine(P)
    u = lattice_coords(dims)
    deformed = field_.compose(P)
    e2, _ = invariant_E(deformed.gradient(u), deformed.hessian(u))
    pu = u @ P.T
    e1, _ = invariant_E(field_.gradient(pu), field_.hessian(pu))
    rms, mx = _rel_errors(e2, e1)
    return {"rel_rms": rms, "max_rel": mx}


def _reference_map(field_: AnalyticField, dims, kw: dict) -> tuple[Volume3D, np.ndarray]:
    v1 = Volume3D(field_.value(lattice_coords(dims)))
    return v1, invariant_map(v1, None, **kw).E


def discrete_invariance(
    field_: AnalyticField,
    P,
    dims,
    interp: str = "tricubic",
    alpha: float = 1.0,
    window: int = 7,
    border: int = 3,
    reference=None,
) -> dict:
    """Filter-based E map of the resampled volume versus the pulled-back E map of the original.

    ``reference`` may carry a precomputed ``(volume, E map)`` of the undeformed
    field, which does not depend on ``P``.
    """
    P = check_affine(P)
    kw = {"alpha": alpha, "window": window, "border": border}
    v1, e1 = reference if reference is not None else _reference_map(field_, dims, kw)
    v2 = apply_affine_deformation(v1, P, interp)
    e2 = invariant_map(v2, None, **kw).E
    support = interior_support(dims, P, border + 2)
    pulled = _interp(e1, _source_coords(dims, P), interp)
    rms, mx = _rel_errors(e2[support], pulled[support])
    return {"rel_rms": rms, "max_rel": mx, "voxels": int(support.sum())}


def invariance_report(
    field_: AnalyticField,
    P_list,
    dims=(32, 32, 32),
    interp: str = "tricubic",
    discrete: bool = True,
    alpha: float = 1.0,
    window: int = 7,
    border: int = 3,
) -> dict:
    dims = tuple(int(n) for n in dims)
    reference = _reference_map(field_, dims, {"alpha": alpha, "window": window, "border": border}) if discrete else None
    draws = []
    for P in P_list:
        P = check_affine(P)
        entry = {"P": P.tolist(), "analytic": analytic_invariance(field_, P, dims)}
        if discrete:
            entry["discrete"] = discrete_invariance(field_, P, dims, interp, alpha, window, border, reference)
        draws.append(entry)

    def summary(path):
        vals = [d[path] for d in draws if path in d]
        if not vals:
            return None
        return {
            "rel_rms_max": max(v["rel_rms"] for v in vals),
            "rel_rms_mean": float(np.mean([v["rel_rms"] for v in vals])),
            "max_rel_max": max(v["max_rel"] for v in vals),
        }

    return {
        "draws": draws,
        "summary": {"analytic": summary("analytic"), "discrete": summary("discrete"), "count": len(draws)},
    }


def synthetic_lesion(seed: int, label: int, dims=(16, 16, 16), radius: float = 5.0):
    """Ellipsoidal lesion on a smooth background, for demos and pipeline tests.

    Class 1 lesions carry shorter-wavelength internal texture than class 0;
    the mask covers the ellipsoid and the volume keeps the surrounding voxels.
    """
    from demtd.volume_io import MaskROI

    rng = np.random.default_rng(seed)
    u = lattice_coords(dims)
    semi = radius * rng.uniform(0.8, 1.2, 3)
    inside = np.sum((u / semi) ** 2, axis=-1) <= 1.0
    wavelength = 4.0 if label == 1 else 10.0
    texture = band_limited_phantom(dims, seed=int(rng.integers(2**31)), n_waves=6, min_wavelength=wavelength)
    values = 100.0 + 0.5 * np.sum(u**2, axis=-1) + 20.0 * inside + 5.0 * texture.value(u)
    values = values + rng.normal(0.0, 0.5, dims)
    return Volume3D(values), MaskROI(inside)
