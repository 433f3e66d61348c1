"""Confusion counts, precision/recall/F1/accuracy, ROC-AUC and JSON reports.

The positive class defaults to no-stress, so TP counts correctly
recognised no-stress windows.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

NOSTRESS, STRESS = 0, 1
CLASS_NAMES = {NOSTRESS: "nostress", STRESS: "stress"}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int
    positive: int = NOSTRESS

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_counts(pred, truth, positive=NOSTRESS) -> ConfusionMatrix:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {truth.shape} labels")
    if pred.size == 0:
        raise ValueError("no predictions to evaluate")
    pp, tp_ = pred == positive, truth == positive
    return ConfusionMatrix(
        tp=int(np.sum(pp & tp_)),
        tn=int(np.sum(~pp & ~tp_)),
        fp=int(np.sum(pp & ~tp_)),
        fn=int(np.sum(~pp & tp_)),
        positive=positive,
    )


def _ratio(num: int, den: int, name: str) -> float:
    if den == 0:
        warnings.warn(f"{name} is undefined (zero denominator); reporting 0", RuntimeWarning, stacklevel=3)
        return 0.0
    return num / den


def classification_metrics(cm: ConfusionMatrix) -> tuple[float, float, float, float]:
    """(precision, recall, f1, accuracy); undefined ratios are reported as 0."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision")
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall")
    # 2PR/(P+R) reduced to counts: one rounding instead of several
    f1 = 0.0 if cm.tp == 0 else 2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn)
    accuracy = (cm.tp + cm.tn) / cm.total
    return precision, recall, f1, accuracy


def roc_auc(scores, truth, positive=NOSTRESS) -> float:
    """Mann-Whitney AUC of ``scores`` for the positive class; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    is_pos = np.asarray(truth) == positive
    n_pos = int(is_pos.sum())
    n_neg = is_pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both classes in the ground truth")
    ranks = rankdata(scores)  # average ranks give ties half credit
    u = ranks[is_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, truth, positive=NOSTRESS):
    """(thresholds, tpr, fpr), one point per distinct score plus the origin."""
    scores = np.asarray(scores, dtype=np.float64)
    is_pos = np.asarray(truth) == positive
    thresholds = np.concatenate([[np.inf], np.unique(scores)[::-1]])
    n_pos, n_neg = max(is_pos.sum(), 1), max((~is_pos).sum(), 1)
    tpr = np.array([np.sum(is_pos & (scores >= t)) / n_pos for t in thresholds])
    fpr = np.array([np.sum(~is_pos & (scores >= t)) / n_neg for t in thresholds])
    return thresholds, tpr, fpr


def write_roc_csv(scores, truth, path, positive=NOSTRESS) -> None:
    thr, tpr, fpr = roc_curve(scores, truth, positive)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "tpr", "fpr"])
        for row in zip(thr, tpr, fpr):
            w.writerow([repr(float(v)) for v in row])


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    confusion: ConfusionMatrix
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        c = asdict(self.confusion)
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "confusion": {k: c[k] for k in ("tp", "tn", "fp", "fn")},
            "meta": {"positive_class": CLASS_NAMES.get(c["positive"], c["positive"]), **self.meta},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        meta = dict(d.get("meta", {}))
        pos = meta.pop("positive_class", CLASS_NAMES[NOSTRESS])
        pos = {v: k for k, v in CLASS_NAMES.items()}.get(pos, pos)
        return cls(
            accuracy=d["accuracy"], precision=d["precision"], recall=d["recall"],
            f1=d["f1"], auc=d["auc"],
            confusion=ConfusionMatrix(**d["confusion"], positive=pos),
            meta=meta,
        )


def evaluate(pred, truth, scores, positive=NOSTRESS, meta=None) -> EvalReport:
    """Build a report from predictions and positive-class scores.

    Both classes' precision and recall go into ``meta`` since the headline
    numbers depend on the positive-class choice. AUC is 0.5 when the
    ground truth holds a single class.
    """
    cm = confusion_counts(pred, truth, positive)
    p, r, f1, acc = classification_metrics(cm)
    try:
        auc = roc_auc(scores, truth, positive)
    except ValueError:
        warnings.warn("single-class ground truth; AUC reported as 0.5", RuntimeWarning, stacklevel=2)
        auc = 0.5
    meta = dict(meta or {})
    per_class = {}
    for cls in (NOSTRESS, STRESS):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cp, cr, cf, _ = classification_metrics(confusion_counts(pred, truth, cls))
        per_class[CLASS_NAMES[cls]] = {"precision": cp, "recall": cr, "f1": cf}
    meta["per_class"] = per_class
    return EvalReport(acc, p, r, f1, auc, cm, meta)


def write_report(report: EvalReport, path: str | os.PathLike) -> Path:
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"report directory does not exist: {path.parent}")
    # json writes floats with repr, i.e. shortest round-tripping form
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_report(path: str | os.PathLike) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
