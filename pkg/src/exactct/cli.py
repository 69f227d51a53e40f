"""Command-line entry points: synth | extract | thresholds | train | explain | render.

Every command is deterministic given (inputs, config, seed) and idempotent on
its outputs. Batch extraction parallelizes across cases; the EXACTCT_THREADS
environment variable caps the worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .biomarkers import FEATURE_COLUMNS
from .boosting import TreeEnsemble, XgbHyper, train_xgb
from .classifiers import (
    GaussianNaiveBayes,
    GradientBoosting,
    LinearSvm,
    LogisticRegressionGD,
    RandomForest,
)
from .cohort import (
    build_cohort,
    read_features_csv,
    read_labels_csv,
    write_features_csv,
)
from .config import load_config
from .manifest import CaseManifest
from .metrics import auc, confusion_metrics, roc_curve, youden_threshold
from .pipeline import extract_case, render_case, synth_cohort
from .shapley import explain_shap, shap_global_summary

__all__ = ["main", "TABLE3_COLUMNS", "TABLE4_COLUMNS", "MODEL_KINDS"]

TABLE3_COLUMNS = ("AUC", "Threshold", "Specificity", "Sensitivity", "MCC",
                  "Accuracy", "Balanced Accuracy")
TABLE4_COLUMNS = ("Accuracy", "Balanced Accuracy", "Recall", "Specificity",
                  "PPV", "F1", "MCC", "AUC")

MODEL_KINDS = ("logistic", "svm", "gnb", "forest", "gbm", "xgb")


def _max_workers() -> int:
    cap = os.environ.get("EXACTCT_THREADS")
    if cap:
        return max(1, int(cap))
    return min(os.cpu_count() or 1, 8)


def _print_table(columns, values):
    cells = [f"{v:.4f}" if isinstance(v, float) else str(v) for v in values]
    widths = [max(len(c), len(v)) for c, v in zip(columns, cells)]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    print("  ".join(v.ljust(w) for v, w in zip(cells, widths)))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    manifests, labels_path = synth_cohort(args.n, args.seed, args.out,
                                          args.positive_fraction)
    print(f"wrote {len(manifests)} cases and {labels_path}")
    return 0


def _extract_one(payload):
    manifest_path, cfg = payload
    manifest = CaseManifest.from_file(manifest_path)
    return extract_case(manifest, cfg).features


def cmd_extract(args) -> int:
    cfg = load_config(args.config, args.set or ())
    paths = [Path(p) for p in args.manifests]
    if args.jobs is not None:
        workers = max(1, args.jobs)
    else:
        workers = _max_workers()
    workers = min(workers, len(paths)) or 1

    if workers == 1:
        rows = [_extract_one((p, cfg)) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_extract_one, [(p, cfg) for p in paths]))
    rows.sort(key=lambda r: r.case_id)
    write_features_csv(rows, args.out)
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return 0


def _load_cohort(features_path, labels_path, source=""):
    rows = read_features_csv(features_path)
    labels = read_labels_csv(labels_path)
    return build_cohort(rows, labels, source)


def cmd_thresholds(args) -> int:
    if args.feature not in FEATURE_COLUMNS:
        raise SystemExit(
            f"unknown feature {args.feature!r}; choose from {', '.join(FEATURE_COLUMNS)}"
        )
    train = _load_cohort(args.features, args.labels, "train")
    train.require_both_classes()
    col = FEATURE_COLUMNS.index(args.feature)
    scores = train.X()[:, col]
    curve = roc_curve(scores, train.y())
    thr, j = youden_threshold(curve)
    area = auc(curve)

    if args.test_features and args.test_labels:
        test = _load_cohort(args.test_features, args.test_labels, "test")
        eval_scores = test.X()[:, col]
        eval_labels = test.y()
    else:
        eval_scores, eval_labels = scores, train.y()
    pred = curve.classify(eval_scores, thr)
    m = confusion_metrics(pred, eval_labels)

    reported_thr = -thr if curve.flipped else thr
    print(f"feature: {args.feature}  (J = {j:.4f}, "
          f"direction: {'<=' if curve.flipped else '>='})")
    _print_table(TABLE3_COLUMNS, (area, reported_thr, m.specificity, m.recall,
                                  m.mcc, m.accuracy, m.balanced_accuracy))
    if args.out:
        Path(args.out).write_text(json.dumps({
            "feature": args.feature,
            "threshold": reported_thr,
            "flipped": curve.flipped,
            "youden_j": j,
            "columns": list(TABLE3_COLUMNS),
            "values": [area, reported_thr, m.specificity, m.recall, m.mcc,
                       m.accuracy, m.balanced_accuracy],
        }, indent=2))
    return 0


def _make_model(kind, hyper: dict):
    if kind == "logistic":
        return LogisticRegressionGD(**hyper)
    if kind == "svm":
        return LinearSvm(**hyper)
    if kind == "gnb":
        return GaussianNaiveBayes(**hyper)
    if kind == "forest":
        return RandomForest(**hyper)
    if kind == "gbm":
        return GradientBoosting(**hyper)
    raise SystemExit(f"unknown model kind {kind!r}; valid kinds: {', '.join(MODEL_KINDS)}")


def _model_snapshot(kind, model, hyper):
    doc = {"format": "exactct-model", "version": 1, "kind": kind, "hyper": hyper}
    if kind in ("logistic", "svm"):
        doc["weights"] = list(model.w_)
        doc["bias"] = model.b_
        doc["mean"] = list(model.mean_)
        doc["std"] = list(model.std_)
    elif kind == "gnb":
        doc["priors"] = model.priors_
        doc["means"] = {k: list(v) for k, v in model.means_.items()}
        doc["vars"] = {k: list(v) for k, v in model.vars_.items()}
    return doc


def cmd_train(args) -> int:
    train = _load_cohort(args.features, args.labels, "train")
    train.require_both_classes()
    hyper = json.loads(args.hyper) if args.hyper else {}
    X, y = train.X(), train.y()

    if args.model == "xgb":
        ens = train_xgb(X, y, XgbHyper(**hyper), FEATURE_COLUMNS)
        scores = ens.predict_proba(X)
        pred = (scores >= 0.5).astype(int)
        snapshot_text = ens.to_json()
    else:
        model = _make_model(args.model, hyper)
        model.fit(X, y)
        scores = model.predict_score(X)
        pred = model.predict(X)
        snapshot_text = json.dumps(_model_snapshot(args.model, model, hyper),
                                   indent=2)

    if args.test_features and args.test_labels:
        test = _load_cohort(args.test_features, args.test_labels, "test")
        Xe, ye = test.X(), test.y()
        if args.model == "xgb":
            scores = ens.predict_proba(Xe)
            pred = (scores >= 0.5).astype(int)
        else:
            scores = model.predict_score(Xe)
            pred = model.predict(Xe)
        eval_y = ye
    else:
        eval_y = y

    m = confusion_metrics(pred, eval_y)
    area = auc(roc_curve(scores, eval_y)) if eval_y.min() != eval_y.max() else float("nan")
    print(f"model: {args.model}")
    _print_table(TABLE4_COLUMNS, (m.accuracy, m.balanced_accuracy, m.recall,
                                  m.specificity, m.ppv, m.f1, m.mcc, area))
    if args.out:
        Path(args.out).write_text(snapshot_text)
        print(f"wrote model snapshot to {args.out}")
    return 0


def cmd_explain(args) -> int:
    ens = TreeEnsemble.from_json(Path(args.model).read_text())
    rows = read_features_csv(args.features)
    if tuple(ens.feature_names) != FEATURE_COLUMNS:
        raise SystemExit(
            f"snapshot features {list(ens.feature_names)} do not match the "
            f"feature CSV columns {list(FEATURE_COLUMNS)}"
        )
    X = np.array([r.values() for r in rows])
    if args.background:
        bg_rows = read_features_csv(args.background)
        background = np.array([r.values() for r in bg_rows])
    else:
        background = X            # default: the set being explained

    mean_abs, explanations = shap_global_summary(ens, X, background)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "phi0"] + [f"phi_{c}" for c in FEATURE_COLUMNS])
        for row, e in zip(rows, explanations):
            writer.writerow([row.case_id, format(e.phi0, ".17g")]
                            + [format(p, ".17g") for p in e.phi])
    ranking = sorted(zip(FEATURE_COLUMNS, mean_abs), key=lambda t: -t[1])
    print("mean |phi| ranking:")
    for name, value in ranking:
        print(f"  {name:24s} {value:.6f}")
    return 0


def cmd_render(args) -> int:
    cfg = load_config(args.config, args.set or ())
    manifest = CaseManifest.from_file(args.manifest)
    path = render_case(manifest, cfg, args.out)
    print(f"wrote overlay bundle manifest {path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_config_args(p):
    p.add_argument("--config", default=None, help="JSON pipeline config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted config override, e.g. fat.rays=360")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exactct",
        description="CT-enterography biomarker extraction and modeling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom cohort")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--positive-fraction", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract features from case manifests")
    p.add_argument("manifests", nargs="+", help="case manifest JSON files")
    p.add_argument("--out", required=True, help="features CSV to write")
    p.add_argument("--jobs", type=int, default=None)
    _add_config_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("thresholds", help="single-feature ROC/Youden thresholding")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--feature", required=True)
    p.add_argument("--test-features", default=None)
    p.add_argument("--test-labels", default=None)
    p.add_argument("--out", default=None, help="JSON report path")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("train", help="train a classifier on a feature cohort")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model", required=True,
                   help=f"one of: {', '.join(MODEL_KINDS)}")
    p.add_argument("--hyper", default=None, help="JSON hyperparameter object")
    p.add_argument("--test-features", default=None)
    p.add_argument("--test-labels", default=None)
    p.add_argument("--out", default=None, help="model snapshot JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="exact Shapley attributions for an xgb snapshot")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--background", default=None,
                   help="background features CSV (default: the explained set)")
    p.add_argument("--out", required=True, help="SHAP CSV path")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("render", help="export an overlay bundle for one case")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
