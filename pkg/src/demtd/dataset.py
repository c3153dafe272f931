"""Feature tables, lesion manifests and their file formats."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from demtd.errors import BadParam, DimMismatch, DuplicateId, HeaderParse, MissingFile, NonFinite
from demtd.glcm import N_FEATURES, descriptor_from_map
from demtd.invariants import InvariantMap, invariant_map
from demtd.volume_io import DEFAULT_MARGIN, crop_to_roi, load_mask, load_volume


def feature_columns(p: int = N_FEATURES) -> list[str]:
    return [f"f{k:03d}" for k in range(p)]


@dataclass
class FeatureTable:
    ids: list[str]
    labels: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        if len(self.ids) != self.labels.size or self.X.shape[0] != self.labels.size:
            raise DimMismatch("ids, labels and feature rows must have equal length")
        if not np.all(np.isfinite(self.X)):
            raise NonFinite("feature table contains NaN or Inf")


def write_feature_csv(table: FeatureTable, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + feature_columns(table.X.shape[1]))
        for ident, label, row in zip(table.ids, table.labels, table.X):
            w.writerow([ident, int(label)] + [repr(float(v)) for v in row])


def read_feature_csv(path) -> FeatureTable:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["id", "label"]:
        raise HeaderParse(f"{path}: header must start with id,label")
    p = len(rows[0]) - 2
    if rows[0][2:] != feature_columns(p):
        raise HeaderParse(f"{path}: feature columns must be f000..f{p - 1:03d}")
    ids, labels, X = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != p + 2:
            raise HeaderParse(f"{path}:{lineno}: expected {p + 2} fields, got {len(row)}")
        try:
            labels.append(int(row[1]))
            X.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise HeaderParse(f"{path}:{lineno}: {exc}") from exc
        ids.append(row[0])
    if any(lab not in (0, 1) for lab in labels):
        raise BadParam(f"{path}: labels must be 0 or 1")
    return FeatureTable(ids, np.array(labels), np.array(X).reshape(len(ids), p))


@dataclass(frozen=True)
class Lesion:
    id: str
    volume: Path
    mask: Path
    label: int


@dataclass
class Manifest:
    lesions: list[Lesion]
    defaults: dict = field(default_factory=dict)

    @property
    def labels(self) -> np.ndarray:
        return np.array([les.label for les in self.lesions], dtype=np.int64)


def load_manifest(path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise HeaderParse(f"{path}: {exc}") from exc
    if isinstance(doc, list):
        doc = {"lesions": doc}
    base = path.parent
    lesions, seen = [], set()
    try:
        for rec in doc["lesions"]:
            ident = str(rec["id"])
            if ident in seen:
                raise DuplicateId(f"duplicate lesion id {ident!r}")
            seen.add(ident)
            label = rec["label"]
            if label not in (0, 1):
                raise BadParam(f"lesion {ident!r}: label must be 0 or 1")
            lesions.append(Lesion(ident, base / rec["volume"], base / rec["mask"], int(label)))
    except (KeyError, TypeError) as exc:
        raise HeaderParse(f"{path}: malformed manifest ({exc})") from exc
    return Manifest(lesions, dict(doc.get("defaults", {})))


def lesion_map(lesion: Lesion, alpha=1.0, window=7, border=3, margin=DEFAULT_MARGIN) -> InvariantMap:
    volume = load_volume(lesion.volume)
    mask = load_mask(lesion.mask)
    volume, mask = crop_to_roi(volume, mask, margin)
    return invariant_map(volume, mask, alpha=alpha, window=window, border=border)


def lesion_features(lesion: Lesion, n: int, levels: int, **kw) -> np.ndarray:
    return descriptor_from_map(lesion_map(lesion, **kw), n, levels)
