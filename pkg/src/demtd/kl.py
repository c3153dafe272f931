"""Karhunen-Loeve decorrelation of each measure across the 13 directions.

For every measure the 13 per-direction values of a descriptor form one
vector; the transform subtracts the training mean and projects onto the
eigenvectors of the training covariance (largest eigenvalue first).  The
output keeps the 364-value layout, with slot ``k`` of each measure holding
the ``k``-th component instead of direction ``k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from demtd.errors import BasisMismatch, TooFewSamples
from demtd.glcm import MEASURES, N_DIRECTIONS, N_FEATURES, N_MEASURES


def _blocks(X: np.ndarray) -> np.ndarray:
    """(N, 364) direction-major -> (N, measures, directions)."""
    return X.reshape(X.shape[0], N_DIRECTIONS, N_MEASURES).transpose(0, 2, 1)


def _unblocks(B: np.ndarray) -> np.ndarray:
    return B.transpose(0, 2, 1).reshape(B.shape[0], N_FEATURES)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # make the first non-negligible component of every column positive
    out = vecs.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        tol = 1e-12 * np.abs(col).max()
        first = col[np.abs(col) > tol][0]
        if first < 0:
            out[:, c] = -col
    return out


@dataclass(frozen=True)
class KLBasis:
    mean: np.ndarray  # (measures, directions)
    basis: np.ndarray  # (measures, directions, directions); columns are components
    eigenvalues: np.ndarray  # (measures, directions), descending

    def to_json(self) -> str:
        doc = {
            "directions": N_DIRECTIONS,
            "measures": [
                {
                    "name": name,
                    "mean": self.mean[m].tolist(),
                    "basis": self.basis[m].tolist(),
                    "eigenvalues": self.eigenvalues[m].tolist(),
                }
                for m, name in enumerate(MEASURES)
            ],
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "KLBasis":
        doc = json.loads(text)
        entries = doc["measures"]
        if len(entries) != N_MEASURES or doc.get("directions") != N_DIRECTIONS:
            raise BasisMismatch("stored basis does not match the 13 x 28 layout")
        return cls(
            np.array([e["mean"] for e in entries], dtype=np.float64),
            np.array([e["basis"] for e in entries], dtype=np.float64),
            np.array([e["eigenvalues"] for e in entries], dtype=np.float64),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "KLBasis":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def kl_transform_fit(X) -> KLBasis:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != N_FEATURES:
        raise BasisMismatch(f"expected {N_FEATURES} features, got {X.shape[1]}")
    if X.shape[0] < 2:
        raise TooFewSamples("KL fit needs at least 2 training vectors")
    blocks = _blocks(X)
    mean = blocks.mean(axis=0)
    basis = np.empty((N_MEASURES, N_DIRECTIONS, N_DIRECTIONS))
    eigenvalues = np.empty((N_MEASURES, N_DIRECTIONS))
    for m in range(N_MEASURES):
        centred = blocks[:, m, :] - mean[m]
        cov = centred.T @ centred / (X.shape[0] - 1)
        w, v = np.linalg.eigh(cov)
        order = np.argsort(w, kind="stable")[::-1]
        eigenvalues[m] = np.clip(w[order], 0.0, None)
        basis[m] = _fix_signs(v[:, order])
    return KLBasis(mean, basis, eigenvalues)


def _check(basis: KLBasis, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != N_FEATURES or basis.basis.shape != (N_MEASURES, N_DIRECTIONS, N_DIRECTIONS):
        raise BasisMismatch(f"feature length {X.shape[1]} does not match the fitted basis")
    return X, single


def kl_transform_apply(basis: KLBasis, X) -> np.ndarray:
    X, single = _check(basis, X)
    centred = _blocks(X) - basis.mean[None]
    out = _unblocks(np.einsum("nmd,mdc->nmc", centred, basis.basis))
    return out[0] if single else out


def kl_transform_inverse(basis: KLBasis, Y) -> np.ndarray:
    Y, single = _check(basis, Y)
    out = _unblocks(np.einsum("nmc,mdc->nmd", _blocks(Y), basis.basis) + basis.mean[None])
    return out[0] if single else out
