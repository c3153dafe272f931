"""Evaluation harness: metrics, repeated two-fold CV, FSFS, grid search, t-test."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from demtd.errors import BadParam, DimMismatch, SingleClass, TooFewSamples
from demtd.forest import ForestParams, predict_rf, train_rf
from demtd.kl import kl_transform_apply, kl_transform_fit

log = logging.getLogger(__name__)

FSFS_EPS = 1e-4
FSFS_BUDGET = 30
FSFS_INNER_FOLDS = 5


@dataclass
class Metrics:
    auc: float
    acc: float
    sn: float
    sp: float
    auc_std: float = 0.0
    acc_std: float = 0.0
    sn_std: float = 0.0
    sp_std: float = 0.0
    per_repeat: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("per_repeat")
        return out


def _labels(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise BadParam("labels must be 0 or 1")
    return y.astype(np.int64)


def auc_score(scores, labels) -> float:
    """Mann-Whitney AUC: fraction of positive/negative pairs ranked correctly, ties count half."""
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(labels)
    if s.shape != y.shape:
        raise DimMismatch("scores and labels differ in length")
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise SingleClass("AUC needs both classes")
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    starts = np.cumsum(counts) - counts
    # twice the average 1-based rank keeps everything integral
    twice_rank = 2 * starts + counts + 1
    twice_u = int(twice_rank[inverse][y == 1].sum()) - n1 * (n1 + 1)
    return (twice_u / 2) / (n1 * n0)


def metrics(scores, labels, threshold: float = 0.5) -> Metrics:
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(labels)
    auc = auc_score(s, y)
    pred = (s >= threshold).astype(np.int64)
    acc = float(np.mean(pred == y))
    sn = float(np.mean(pred[y == 1] == 1))
    sp = float(np.mean(pred[y == 0] == 0))
    run = {"auc": auc, "acc": acc, "sn": sn, "sp": sp}
    return Metrics(auc, acc, sn, sp, per_repeat=[run])


def aggregate(runs: list[dict]) -> Metrics:
    keys = ("auc", "acc", "sn", "sp")
    vals = {k: np.array([r[k] for r in runs]) for k in keys}
    return Metrics(
        *(float(vals[k].mean()) for k in keys),
        *(float(vals[k].std()) for k in keys),
        per_repeat=list(runs),
    )


def stratified_halves(y: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random class-stratified half/half split; odd class counts alternate the extra sample."""
    fold_a, fold_b = [], []
    extra_to_a = True
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        half = idx.size // 2
        if idx.size % 2:
            half += int(extra_to_a)
            extra_to_a = not extra_to_a
        fold_a.append(idx[:half])
        fold_b.append(idx[half:])
    return np.sort(np.concatenate(fold_a)), np.sort(np.concatenate(fold_b))


def stratified_kfold(y: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    folds = [[] for _ in range(k)]
    offset = 0
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        for r, i in enumerate(idx):
            folds[(r + offset) % k].append(i)
        offset += idx.size
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


def _inner_auc(X, y, cols, params: ForestParams, folds) -> float:
    scores = np.empty(y.size)
    for test in folds:
        train = np.setdiff1d(np.arange(y.size), test)
        model = train_rf(X[np.ix_(train, cols)], y[train], params)
        scores[test] = predict_rf(model, X[np.ix_(test, cols)])
    return auc_score(scores, y)


@dataclass
class SelectionResult:
    selected: list[int]
    history: list[float]  # best inner AUC after each accepted step


def fsfs(
    X,
    y,
    params: ForestParams = ForestParams(n_trees=200),
    eval_seed: int = 0,
    eps: float = FSFS_EPS,
    budget: int = FSFS_BUDGET,
    inner_folds: int = FSFS_INNER_FOLDS,
) -> SelectionResult:
    """Greedy forward selection on internally cross-validated AUC.

    Every candidate is scored on the same stratified folds with the same
    forest seed, so differences reflect the feature, not the resampling.
    Selection stops once the best candidate improves the AUC by less than
    ``eps`` (the empty set scores 0.5) or ``budget`` features are chosen.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _labels(y)
    if X.ndim != 2 or X.shape[1] < 1:
        raise BadParam("feature selection needs at least one feature")
    counts = np.bincount(y, minlength=2)
    if counts.min() < 2:
        raise TooFewSamples("feature selection needs two samples per class")
    k = int(min(inner_folds, counts.min()))
    folds = stratified_kfold(y, k, np.random.default_rng(eval_seed))
    inner_params = ForestParams(**{**asdict(params), "mtry": None})

    selected: list[int] = []
    history: list[float] = []
    current = 0.5
    while len(selected) < min(budget, X.shape[1]):
        best_auc, best_f = -np.inf, -1
        for f in range(X.shape[1]):
            if f in selected:
                continue
            auc = _inner_auc(X, y, selected + [f], inner_params, folds)
            if auc > best_auc:
                best_auc, best_f = auc, f
        if best_auc - current < eps:
            break
        selected.append(best_f)
        history.append(best_auc)
        current = best_auc
        log.debug("fsfs step %d: feature %d, inner AUC %.4f", len(selected), best_f, best_auc)
    return SelectionResult(selected, history)


def _fit_score(X, y, train, test, params, use_fsfs, use_kl, fsfs_kwargs, seed):
    Xtr, Xte = X[train], X[test]
    if use_kl:
        basis = kl_transform_fit(Xtr)
        Xtr, Xte = kl_transform_apply(basis, Xtr), kl_transform_apply(basis, Xte)
    cols = list(range(X.shape[1]))
    if use_fsfs:
        sel = fsfs(Xtr, y[train], eval_seed=seed, **fsfs_kwargs).selected
        cols = sel or cols
    fit_params = ForestParams(**{**asdict(params), "seed": seed})
    if fit_params.mtry is not None and fit_params.mtry > len(cols):
        fit_params = ForestParams(**{**asdict(fit_params), "mtry": None})
    model = train_rf(Xtr[:, cols], y[train], fit_params)
    return predict_rf(model, Xte[:, cols]), cols


def cross_validate(
    X,
    y,
    params: ForestParams = ForestParams(),
    repeats: int = 50,
    seed: int = 0,
    use_fsfs: bool = False,
    use_kl: bool = False,
    threshold: float = 0.5,
    fsfs_kwargs: dict | None = None,
) -> tuple[Metrics, list[list[int]]]:
    """Repeated stratified two-fold CV with pooled scores per repeat.

    Returns the aggregated metrics and the feature subsets used by every fit
    (all features unless ``use_fsfs``).
    """
    X = np.asarray(X, dtype=np.float64)
    y = _labels(y)
    if X.shape[0] != y.size:
        raise DimMismatch("X and y lengths differ")
    if np.bincount(y, minlength=2).min() < 2:
        raise TooFewSamples("two-fold CV needs at least 2 samples per class")
    if repeats < 1:
        raise BadParam("repeats must be >= 1")
    fsfs_kwargs = {"params": ForestParams(n_trees=min(params.n_trees, 200))} | (fsfs_kwargs or {})
    runs, subsets = [], []
    for child in np.random.SeedSequence(seed).spawn(repeats):
        rng = np.random.default_rng(child)
        fold_a, fold_b = stratified_halves(y, rng)
        fit_seeds = rng.integers(0, 2**31, 2)
        scores = np.empty(y.size)
        for (train, test), s in zip(((fold_a, fold_b), (fold_b, fold_a)), fit_seeds):
            scores[test], cols = _fit_score(X, y, train, test, params, use_fsfs, use_kl, fsfs_kwargs, int(s))
            subsets.append(cols)
        runs.append(metrics(scores, y, threshold).per_repeat[0])
    return aggregate(runs), subsets


@dataclass
class GridResult:
    rows: list[dict]
    best: dict

    def table_columns(self) -> list[str]:
        return ["n", "levels", "auc_mean", "auc_std", "acc", "sn", "sp"]


def grid_search(
    feature_fn,
    labels,
    n_range=range(1, 10),
    levels_list=tuple(range(16, 129, 8)),
    params: ForestParams = ForestParams(),
    repeats: int = 50,
    seed: int = 0,
    use_fsfs: bool = False,
    use_kl: bool = False,
) -> GridResult:
    """Brute-force search over (root power, gray levels).

    ``feature_fn(n, levels)`` must return the ``(lesions, 364)`` descriptor
    matrix for that cell; every cell is evaluated with the same CV seed.
    """
    y = _labels(labels)
    rows = []
    for n in n_range:
        for levels in levels_list:
            X = feature_fn(n, levels)
            m, _ = cross_validate(X, y, params, repeats, seed, use_fsfs, use_kl)
            rows.append(
                {
                    "n": int(n),
                    "levels": int(levels),
                    "auc_mean": m.auc,
                    "auc_std": m.auc_std,
                    "acc": m.acc,
                    "sn": m.sn,
                    "sp": m.sp,
                }
            )
    if not rows:
        raise BadParam("grid is empty")
    best = max(rows, key=lambda r: r["auc_mean"])  # first maximum wins ties
    return GridResult(rows, best)


def ttest_scores(scores_a, scores_b) -> float:
    """Two-sided Welch t-test p-value between two score samples."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise TooFewSamples("each sample needs at least 2 scores")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        return 1.0 if diff == 0.0 else 0.0
    t = diff / np.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return float(2.0 * stats.t.sf(abs(t), df))
