"""Random forest of CART trees split on GINI impurity.

Each tree is grown on a bootstrap resample to purity (or ``min_node_size``),
trying ``mtry`` randomly chosen features per node.  All randomness comes from
per-tree sub-seeds spawned from the master seed, so a forest is a pure
function of ``(X, y, params)``; tree ``t`` does not depend on how many trees
are grown after it.  Scores are the fraction of trees voting class 1.

The tree builder is compiled with numba; feature sampling inside it uses a
splitmix64 stream so results do not depend on numba's own RNG.
"""

from __future__ import annotations

import io
import math
import pickle
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from demtd.errors import BadParam, DimMismatch, EmptyTrainSet, SingleClass

MODEL_MAGIC = b"DEMTD-RF\x00"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 5000
    mtry: int | None = None  # None -> floor(sqrt(p))
    min_node_size: int = 1
    bootstrap: bool = True
    class_balance: bool = False
    seed: int = 0

    def resolve_mtry(self, p: int) -> int:
        mtry = self.mtry if self.mtry is not None else max(1, math.isqrt(p))
        if not 1 <= mtry <= p:
            raise BadParam(f"mtry must lie in 1..{p}, got {mtry}")
        return mtry

    def validate(self) -> None:
        if self.n_trees < 1:
            raise BadParam("n_trees must be >= 1")
        if self.min_node_size < 1:
            raise BadParam("min_node_size must be >= 1")


@numba.njit(cache=True)
def _splitmix(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = z ^ (z >> np.uint64(31))
    return state, z


@numba.njit(cache=True)
def _gini(w0, w1):
    tot = w0 + w1
    if tot <= 0.0:
        return 0.0
    a = w0 / tot
    b = w1 / tot
    return 1.0 - a * a - b * b


@numba.njit(cache=True)
def _grow_tree(X, y, w, idx, mtry, min_node_size, seed, feature, threshold, left, right, leaf_vote, importance):
    """Grow one tree over the rows ``idx``; returns the node count."""
    n = idx.shape[0]
    p = X.shape[1]
    state = np.uint64(seed)
    # explicit stack of (node id, start, end) over a working copy of idx
    rows = idx.copy()
    stack_node = np.empty(2 * n + 1, np.int64)
    stack_lo = np.empty(2 * n + 1, np.int64)
    stack_hi = np.empty(2 * n + 1, np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    n_nodes = 1
    feats = np.arange(p)
    vals = np.empty(n, np.float64)
    order = np.empty(n, np.int64)
    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        w0 = 0.0
        w1 = 0.0
        for r in range(lo, hi):
            if y[rows[r]] == 1:
                w1 += w[rows[r]]
            else:
                w0 += w[rows[r]]
        # strict majority of class 1 votes 1; ties vote 0
        leaf_vote[node] = 1 if w1 > w0 else 0
        feature[node] = -1
        size = hi - lo
        if w0 == 0.0 or w1 == 0.0 or size <= min_node_size:
            continue
        parent = _gini(w0, w1) * (w0 + w1)

        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        # partial Fisher-Yates: keep drawing until mtry non-constant features are
        # evaluated or every feature has been seen
        for k in range(p):
            feats[k] = k
        evaluated = 0
        drawn = 0
        while drawn < p and evaluated < mtry:
            state, z = _splitmix(state)
            pick = drawn + np.int64(z % np.uint64(p - drawn))
            f = feats[pick]
            feats[pick] = feats[drawn]
            feats[drawn] = f
            drawn += 1
            for r in range(size):
                vals[r] = X[rows[lo + r], f]
            srt = np.argsort(vals[:size], kind="mergesort")
            if vals[srt[0]] == vals[srt[size - 1]]:
                continue
            evaluated += 1
            l0 = 0.0
            l1 = 0.0
            for r in range(size - 1):
                row = rows[lo + srt[r]]
                if y[row] == 1:
                    l1 += w[row]
                else:
                    l0 += w[row]
                v = vals[srt[r]]
                v_next = vals[srt[r + 1]]
                if v == v_next:
                    continue
                r0 = w0 - l0
                r1 = w1 - l1
                gain = parent - _gini(l0, l1) * (l0 + l1) - _gini(r0, r1) * (r0 + r1)
                if gain > best_gain + 1e-12 * parent:
                    best_gain = gain
                    best_f = f
                    mid = 0.5 * (v + v_next)
                    # guard against the midpoint rounding onto v_next
                    best_t = mid if mid < v_next else v
        if best_f < 0:
            continue
        # partition rows[lo:hi] by the chosen split
        for r in range(lo, hi):
            order[r - lo] = rows[r]
        a = lo
        b = hi - 1
        for r in range(size):
            row = order[r]
            if X[row, best_f] <= best_t:
                rows[a] = row
                a += 1
            else:
                rows[b] = row
                b -= 1
        m = a
        # restore original relative order on the right side
        i0 = m
        i1 = hi - 1
        while i0 < i1:
            tmp = rows[i0]
            rows[i0] = rows[i1]
            rows[i1] = tmp
            i0 += 1
            i1 -= 1
        feature[node] = best_f
        threshold[node] = best_t
        importance[best_f] += best_gain
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes + 1
        stack_lo[top] = m
        stack_hi[top] = hi
        top += 1
        stack_node[top] = n_nodes
        stack_lo[top] = lo
        stack_hi[top] = m
        top += 1
        n_nodes += 2
    return n_nodes


@numba.njit(cache=True)
def _grow_forest(X, y, w, boot, seeds, mtry, min_node_size, feature, threshold, left, right, leaf_vote, importance):
    n_trees = boot.shape[0]
    sizes = np.empty(n_trees, np.int64)
    for t in range(n_trees):
        sizes[t] = _grow_tree(
            X, y, w, boot[t], mtry, min_node_size, seeds[t],
            feature[t], threshold[t], left[t], right[t], leaf_vote[t], importance[t],
        )
    return sizes


@numba.njit(cache=True)
def _votes(X, feature, threshold, left, right, leaf_vote):
    n_trees = feature.shape[0]
    n = X.shape[0]
    out = np.zeros(n, np.int64)
    for s in range(n):
        for t in range(n_trees):
            node = 0
            while feature[t, node] >= 0:
                if X[s, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            out[s] += leaf_vote[t, node]
    return out


def tree_streams(seed: int, n_trees: int, n_samples: int, bootstrap: bool = True):
    """Bootstrap index rows and feature-sampling seeds for every tree."""
    children = np.random.SeedSequence(seed).spawn(n_trees)
    boot = np.empty((n_trees, n_samples), dtype=np.int64)
    seeds = np.empty(n_trees, dtype=np.uint64)
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        boot[t] = rng.integers(0, n_samples, n_samples) if bootstrap else np.arange(n_samples)
        seeds[t] = rng.integers(0, 2**63, dtype=np.uint64)
    return boot, seeds


@dataclass
class ForestModel:
    params: ForestParams
    n_features: int
    mtry: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_vote: np.ndarray
    gini_importance: np.ndarray  # mean decrease in GINI impurity per feature
    meta: dict = field(default_factory=dict)  # caller data stored with the model

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MODEL_MAGIC)
        buf.write(MODEL_VERSION.to_bytes(2, "little"))
        state = {
            "params": asdict(self.params),
            "n_features": self.n_features,
            "mtry": self.mtry,
            "meta": self.meta,
            "arrays": {
                k: getattr(self, k)
                for k in ("feature", "threshold", "left", "right", "leaf_vote", "gini_importance")
            },
        }
        pickle.dump(state, buf, protocol=4)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ForestModel":
        if not blob.startswith(MODEL_MAGIC):
            raise BadParam("not a forest model file")
        version = int.from_bytes(blob[len(MODEL_MAGIC):len(MODEL_MAGIC) + 2], "little")
        if version != MODEL_VERSION:
            raise BadParam(f"unsupported model version {version}")
        state = pickle.loads(blob[len(MODEL_MAGIC) + 2:])
        return cls(
            ForestParams(**state["params"]), state["n_features"], state["mtry"], **state["arrays"], meta=state["meta"]
        )


def _class_weights(y: np.ndarray, balance: bool) -> np.ndarray:
    if not balance:
        return np.ones(y.shape[0])
    counts = np.bincount(y, minlength=2).astype(np.float64)
    return (y.shape[0] / (2.0 * counts))[y]


def train_rf(X, y, params: ForestParams = ForestParams(), boot: np.ndarray | None = None) -> ForestModel:
    """Fit a forest.  ``boot`` overrides the seeded bootstrap index rows."""
    params.validate()
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTrainSet("training set is empty")
    if X.shape[0] != y.shape[0]:
        raise DimMismatch("X and y lengths differ")
    if set(np.unique(y)) != {0, 1}:
        raise SingleClass("training needs both classes 0 and 1")
    n, p = X.shape
    mtry = params.resolve_mtry(p)
    streams, seeds = tree_streams(params.seed, params.n_trees, n, params.bootstrap)
    if boot is not None:
        streams = np.asarray(boot, dtype=np.int64)
        if streams.shape != (params.n_trees, n):
            raise DimMismatch(f"bootstrap rows must have shape {(params.n_trees, n)}")
    max_nodes = 2 * n + 1
    shape = (params.n_trees, max_nodes)
    feature = np.full(shape, -1, dtype=np.int64)
    threshold = np.zeros(shape)
    left = np.zeros(shape, dtype=np.int64)
    right = np.zeros(shape, dtype=np.int64)
    leaf_vote = np.zeros(shape, dtype=np.int64)
    importance = np.zeros((params.n_trees, p))
    w = _class_weights(y, params.class_balance)
    sizes = _grow_forest(
        X, y, w, streams, seeds, mtry, params.min_node_size,
        feature, threshold, left, right, leaf_vote, importance,
    )
    width = int(sizes.max())
    return ForestModel(
        params=params,
        n_features=p,
        mtry=mtry,
        feature=feature[:, :width].copy(),
        threshold=threshold[:, :width].copy(),
        left=left[:, :width].copy(),
        right=right[:, :width].copy(),
        leaf_vote=leaf_vote[:, :width].copy(),
        gini_importance=importance.sum(axis=0) / (params.n_trees * w.sum()),
    )


def predict_votes(model: ForestModel, X) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    if X.shape[1] != model.n_features:
        raise DimMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    return _votes(X, model.feature, model.threshold, model.left, model.right, model.leaf_vote)


def predict_rf(model: ForestModel, X) -> np.ndarray:
    """Fraction of trees voting class 1 for each row of ``X``."""
    return predict_votes(model, X) / model.feature.shape[0]
