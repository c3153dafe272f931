"""``demtd`` command line.

Exit codes: 0 success, 2 bad usage or input files, 3 numerical/runtime failure.
Every command is a pure function of its input files, flags and seed, and every
JSON output echoes the parameters it was produced with.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from demtd import __version__
from demtd.dataset import (
    FeatureTable,
    Manifest,
    lesion_features,
    lesion_map,
    load_manifest,
    read_feature_csv,
    write_feature_csv,
)
from demtd.errors import BadParam, DemtdError, HeaderParse, InputError, MissingFile
from demtd.evaluation import cross_validate, fsfs, grid_search, ttest_scores
from demtd.forest import ForestModel, ForestParams, predict_rf, train_rf
from demtd.glcm import descriptor_from_map
from demtd.invariants import invariant_map
from demtd.kl import KLBasis, kl_transform_apply, kl_transform_fit
from demtd.suppression import GRAY_LEVELS, ROOT_POWERS, check_levels, check_root_power, histogram, quantize, suppress
from demtd.volume_io import DEFAULT_MARGIN, crop_to_roi, load_mask, load_volume, save_array, save_labels

log = logging.getLogger("demtd")


def _dump_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _echo(args, **extra) -> dict:
    keep = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in keep.items()}
    return {"tool": "demtd", "version": __version__, **params, **extra}


def _root_power(value: str) -> int:
    n = int(value)
    if n not in ROOT_POWERS:
        raise BadParam(f"--n must be in 1..9, got {n}")
    return check_root_power(n)


def _levels(value: str) -> int:
    return check_levels(int(value))


def _forest_params(args) -> ForestParams:
    return ForestParams(n_trees=args.trees, mtry=args.mtry, seed=args.seed, class_balance=args.class_balance)


# ---------------------------------------------------------------------------
# commands


def cmd_maps(args) -> int:
    n = _root_power(args.n)
    levels = _levels(args.levels)
    if levels > 256:
        raise BadParam("label maps are written as u8 and need levels <= 256")
    volume = load_volume(args.volume)
    mask = load_mask(args.mask)
    volume, mask = crop_to_roi(volume, mask, args.margin)
    inv = invariant_map(volume, mask, alpha=args.alpha, window=args.window, border=args.border)
    q = suppress(inv.E, n)
    labels = quantize(q, mask, levels)
    hist = histogram(labels, levels)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"n": n, "levels": levels, "version": __version__}
    for name, arr in (("E", inv.E), ("F1", inv.F1), ("F2", inv.F2), ("Q", np.where(inv.mask, q, 0.0))):
        save_array(arr, out / name, volume.spacing, meta)
    # excluded voxels are written as 0 next to the mask that flags them
    save_labels(np.where(labels < 0, 0, labels), out / "labels", volume.spacing, meta)
    save_labels(mask.data.astype(np.uint8), out / "mask", volume.spacing, meta)
    with (out / "histogram.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "probability"])
        for b, pr in enumerate(hist):
            w.writerow([b, repr(float(pr))])
    _dump_json({**inv.stats(), "params": _echo(args)}, out / "stats.json")
    return 0


def _manifest_value(args, manifest: Manifest, key: str, default):
    val = getattr(args, key)
    if val is None:
        val = manifest.defaults.get(key, default)
    return val


def cmd_features(args) -> int:
    manifest = load_manifest(args.manifest)
    n = _root_power(_manifest_value(args, manifest, "n", 1))
    levels = _levels(_manifest_value(args, manifest, "levels", 16))
    ids, labels, rows, failures = [], [], [], []
    for lesion in manifest.lesions:
        try:
            rows.append(
                lesion_features(lesion, n, levels, alpha=args.alpha, window=args.window, border=args.border, margin=args.margin)
            )
        except DemtdError as exc:
            if not args.skip_bad:
                raise
            failures.append({"id": lesion.id, "error": f"{type(exc).__name__}: {exc}"})
            print(f"skipping {lesion.id}: {type(exc).__name__}: {exc}", file=sys.stderr)
            continue
        ids.append(lesion.id)
        labels.append(lesion.label)
    table = FeatureTable(ids, np.array(labels), np.array(rows).reshape(len(ids), -1))
    write_feature_csv(table, args.out)
    _dump_json(_echo(args, n=n, levels=levels, rows=len(ids), failures=failures), str(args.out) + ".json")
    return 0


def _load_table(args) -> FeatureTable:
    if args.features:
        return read_feature_csv(args.features)
    manifest = load_manifest(args.manifest)
    n = _root_power(_manifest_value(args, manifest, "n", 1))
    levels = _levels(_manifest_value(args, manifest, "levels", 16))
    rows = [lesion_features(les, n, levels) for les in manifest.lesions]
    return FeatureTable([les.id for les in manifest.lesions], manifest.labels, np.array(rows))


def cmd_train(args) -> int:
    table = read_feature_csv(args.features)
    params = _forest_params(args)
    X = table.X
    meta: dict = {"kl": None, "selected": None}
    if args.kl:
        basis = kl_transform_fit(X)
        X = kl_transform_apply(basis, X)
        meta["kl"] = basis.to_json()
    cols = list(range(X.shape[1]))
    if args.fsfs:
        cols = fsfs(X, table.labels, ForestParams(n_trees=min(params.n_trees, 200)), eval_seed=args.seed).selected or cols
        meta["selected"] = cols
    model = train_rf(X[:, cols], table.labels, params)
    model.meta = meta
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_bytes(model.to_bytes())
    report = {
        "params": _echo(args),
        "selected_features": cols if args.fsfs else None,
        "gini_importance": model.gini_importance.tolist(),
        "training_samples": int(X.shape[0]),
    }
    _dump_json(report, str(args.out) + ".json")
    return 0


def cmd_predict(args) -> int:
    path = Path(args.model)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    model = ForestModel.from_bytes(path.read_bytes())
    table = read_feature_csv(args.features)
    X = table.X
    if model.meta.get("kl"):
        X = kl_transform_apply(KLBasis.from_json(model.meta["kl"]), X)
    if model.meta.get("selected"):
        X = X[:, model.meta["selected"]]
    scores = predict_rf(model, X)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with Path(args.out).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "score"])
        for ident, label, s in zip(table.ids, table.labels, scores):
            w.writerow([ident, int(label), repr(float(s))])
    return 0


def cmd_cv(args) -> int:
    table = _load_table(args)
    metrics, subsets = cross_validate(
        table.X, table.labels, _forest_params(args), args.repeats, args.seed, args.fsfs, args.kl
    )
    report = {
        "auc_mean": metrics.auc,
        "auc_std": metrics.auc_std,
        "acc": metrics.acc,
        "acc_std": metrics.acc_std,
        "sn": metrics.sn,
        "sn_std": metrics.sn_std,
        "sp": metrics.sp,
        "sp_std": metrics.sp_std,
        "per_repeat": metrics.per_repeat,
        "selected_features": subsets if args.fsfs else None,
        "seed": args.seed,
        "params": _echo(args),
    }
    _dump_json(report, args.out)
    return 0


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def cmd_grid(args) -> int:
    manifest = load_manifest(args.manifest)
    n_range = [_root_power(v) for v in _int_list(args.n_range)]
    levels_list = [_levels(v) for v in _int_list(args.levels_list)]
    maps = [
        lesion_map(les, alpha=args.alpha, window=args.window, border=args.border, margin=args.margin)
        for les in manifest.lesions
    ]

    def features(n, levels):
        return np.array([descriptor_from_map(m, n, levels) for m in maps])

    result = grid_search(
        features, manifest.labels, n_range, levels_list, _forest_params(args), args.repeats, args.seed, args.fsfs, args.kl
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = ["n", "levels", "auc_mean", "auc_std", "acc", "sn", "sp"]
    with out.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in result.rows:
            w.writerow([row["n"], row["levels"]] + [repr(float(row[c])) for c in cols[2:]])
    _dump_json({"best": result.best, "rows": len(result.rows), "params": _echo(args)}, str(out) + ".json")
    return 0


def _read_scores(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        if rows and "score" in rows[0]:
            k = rows[0].index("score")
            return np.array([float(r[k]) for r in rows[1:]])
        return np.array([float(r[0]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise HeaderParse(f"{path}: {exc}") from exc


def cmd_ttest(args) -> int:
    a = _read_scores(args.a)
    b = _read_scores(args.b)
    p = ttest_scores(a, b)
    _dump_json({"p_value": p, "n_a": int(a.size), "n_b": int(b.size), "params": _echo(args)}, args.out)
    return 0


def cmd_validate(args) -> int:
    from demtd.phantom import AnalyticField, invariance_report, random_affine, smooth_test_phantom

    rng = np.random.default_rng(args.seed)
    if args.phantom == "quadratic":
        field_ = smooth_test_phantom(args.seed)
    elif args.phantom == "sphere":
        field_ = AnalyticField({(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0})
    else:
        raise BadParam(f"unknown phantom {args.phantom!r}")
    Ps = [random_affine(rng, args.sv_low, args.sv_high) for _ in range(args.draws)]
    if args.identity:
        Ps = [np.eye(3)] * args.draws
    report = invariance_report(field_, Ps, (args.size,) * 3, interp=args.interp, discrete=not args.analytic_only)
    report["params"] = _echo(args)
    _dump_json(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_filter_flags(p):
    p.add_argument("--alpha", type=float, default=1.0, help="Deriche alpha (default 1)")
    p.add_argument("--window", type=int, default=7, help="Deriche window taps (default 7)")
    p.add_argument("--border", type=int, default=3, help="mirror border width (default 3)")
    p.add_argument("--margin", type=int, default=DEFAULT_MARGIN, help="crop margin around the ROI (default 3)")


def _add_forest_flags(p):
    p.add_argument("--trees", type=int, default=5000)
    p.add_argument("--mtry", type=int, default=None, help="features tried per node (default floor(sqrt(p)), 19 at p=364)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-balance", action="store_true", help="weight classes inversely to their frequency")
    p.add_argument("--fsfs", action="store_true", help="forward-step feature selection inside each training fold")
    p.add_argument("--kl", action="store_true", help="Karhunen-Loeve transform across the 13 directions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demtd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"demtd {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("maps", help="E/F1/F2 maps, gray-level labels and histogram for one lesion")
    p.add_argument("--volume", required=True, type=Path)
    p.add_argument("--mask", required=True, type=Path)
    p.add_argument("--n", "--suppress", dest="n", default="1", help="root power, 1..9")
    p.add_argument("--levels", default="16", help=f"gray levels, one of {list(GRAY_LEVELS)}")
    p.add_argument("--out-dir", required=True, type=Path)
    _add_filter_flags(p)
    p.set_defaults(func=cmd_maps)

    p = sub.add_parser("features", help="364-value descriptor per lesion of a manifest")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--n", default=None)
    p.add_argument("--levels", default=None)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--skip-bad", action="store_true", help="skip lesions that fail instead of aborting")
    _add_filter_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="fit a forest on a feature CSV")
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_forest_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a feature CSV with a trained model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="repeated stratified two-fold cross-validation")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", type=Path)
    src.add_argument("--manifest", type=Path)
    p.add_argument("--n", default=None)
    p.add_argument("--levels", default=None)
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--out", required=True, type=Path)
    _add_forest_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("grid", help="brute-force search over root power and gray levels")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--n-range", default="1-9")
    p.add_argument("--levels-list", default=",".join(str(v) for v in GRAY_LEVELS))
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--out", required=True, type=Path)
    _add_forest_flags(p)
    _add_filter_flags(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("ttest", help="Welch t-test between two score files")
    p.add_argument("--a", required=True, type=Path)
    p.add_argument("--b", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("validate-invariance", help="affine invariance of E on an analytic phantom")
    p.add_argument("--phantom", default="quadratic", choices=["quadratic", "sphere"])
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--interp", default="tricubic", choices=["tricubic", "trilinear"])
    p.add_argument("--sv-low", type=float, default=0.8)
    p.add_argument("--sv-high", type=float, default=1.25)
    p.add_argument("--analytic-only", action="store_true")
    p.add_argument("--identity", action="store_true", help="use P = I for every draw")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"demtd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (DemtdError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"demtd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"demtd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
