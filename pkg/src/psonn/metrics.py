"""Binary classification metrics and a Weka-style evaluation report.

Class "a" is the positive class (label 1) and class "b" the negative class.
Undefined values (for example ROC area on a single-class fold) are stored as
NaN, rendered as ``?`` and serialized as ``null``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise DataError("confusion counts must be non-negative")
        if self.total < 1:
            raise DataError("confusion matrix is empty")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def correct(self) -> int:
        return self.tp + self.tn

    @property
    def incorrect(self) -> int:
        return self.fn + self.fp

    def transpose(self) -> ConfusionMatrix:
        """The same matrix seen with the negative class as positive."""
        return ConfusionMatrix(tp=self.tn, fn=self.fp, fp=self.fn, tn=self.tp)


def build_confusion(actuals: Sequence[int], predicted: Sequence[int]) -> ConfusionMatrix:
    a = np.asarray(actuals).reshape(-1)
    p = np.asarray(predicted).reshape(-1)
    if a.shape != p.shape:
        raise DataError(f"{a.size} actual labels but {p.size} predictions")
    if a.size == 0:
        raise DataError("cannot build a confusion matrix from no predictions")
    a1, p1 = a == 1, p == 1
    return ConfusionMatrix(
        tp=int(np.count_nonzero(a1 & p1)),
        fn=int(np.count_nonzero(a1 & ~p1)),
        fp=int(np.count_nonzero(~a1 & p1)),
        tn=int(np.count_nonzero(~a1 & ~p1)),
    )


def scalar_metrics(cm: ConfusionMatrix) -> tuple[float, float]:
    """Accuracy and Cohen's kappa."""
    n = cm.total
    observed = cm.correct / n
    actual_pos, actual_neg = cm.tp + cm.fn, cm.fp + cm.tn
    pred_pos, pred_neg = cm.tp + cm.fp, cm.fn + cm.tn
    expected = (actual_pos * pred_pos + actual_neg * pred_neg) / (n * n)
    if expected == 1.0:
        if cm.incorrect == 0:
            return observed, 1.0
        raise DataError("kappa undefined: chance agreement is 1 with errors present")
    return observed, (observed - expected) / (1.0 - expected)


@dataclass(frozen=True)
class ClassMetrics:
    tp_rate: float
    fp_rate: float
    precision: float
    recall: float
    f_measure: float
    mcc: float
    roc_area: float = math.nan
    prc_area: float = math.nan


@dataclass(frozen=True)
class ClassReport:
    positive: ClassMetrics
    negative: ClassMetrics
    weighted: ClassMetrics


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def mcc(cm: ConfusionMatrix) -> float:
    den = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    if den == 0:
        return 0.0
    return (cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(den)


def _one_class(cm: ConfusionMatrix) -> ClassMetrics:
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    return ClassMetrics(
        tp_rate=recall,
        fp_rate=_ratio(cm.fp, cm.fp + cm.tn),
        precision=precision,
        recall=recall,
        f_measure=_ratio(2 * precision * recall, precision + recall),
        mcc=mcc(cm),
    )


def class_metrics(cm: ConfusionMatrix, probs: Sequence[float] | None = None,
                  actuals: Sequence[int] | None = None) -> ClassReport:
    """Per-class rates, precision, recall, F-measure and MCC.

    When ``probs`` (positive-class probabilities) and ``actuals`` are given,
    ROC and PRC areas are filled in as well. Averages are weighted by the
    number of actual instances of each class.
    """
    pos, neg = _one_class(cm), _one_class(cm.transpose())
    if probs is not None:
        p = np.asarray(probs, dtype=np.float64)
        y = np.asarray(actuals)
        if len(set(y.tolist())) == 2:
            roc = roc_auc(p, y)
            pos = _with(pos, roc_area=roc, prc_area=prc_auc(p, y))
            neg = _with(neg, roc_area=roc, prc_area=prc_auc(1.0 - p, 1 - y))
    w_pos, w_neg = cm.tp + cm.fn, cm.fp + cm.tn
    n = cm.total
    weighted = ClassMetrics(**{
        f.name: (getattr(pos, f.name) * w_pos + getattr(neg, f.name) * w_neg) / n
        for f in fields(ClassMetrics)
    })
    return ClassReport(pos, neg, weighted)


def _with(m: ClassMetrics, **changes) -> ClassMetrics:
    return ClassMetrics(**{**asdict(m), **changes})


def probabilistic_errors(probs: Sequence[float], actuals: Sequence[int],
                         train_prior_positive: float) -> tuple[float, float, float, float]:
    """MAE, RMSE, relative absolute error and root relative squared error.

    Errors are taken over both class-probability columns, which for two
    classes equals the error of the positive column alone. The relative
    errors compare against a predictor that always outputs the training
    prior, and are returned as percentages.
    """
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(actuals, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise DataError(f"{p.size} probabilities but {y.size} labels")
    if p.size == 0:
        raise DataError("no predictions")
    if np.any((p < 0) | (p > 1)):
        raise DataError("probabilities must lie in [0, 1]")
    abs_err = np.abs(p - y)
    mae = float(np.mean(abs_err))
    rmse = math.sqrt(float(np.mean(abs_err * abs_err)))
    prior_err = np.abs(train_prior_positive - y)
    prior_mae = float(np.mean(prior_err))
    prior_rmse = math.sqrt(float(np.mean(prior_err * prior_err)))
    if prior_mae == 0.0:
        raise DataError("prior predictor has zero error; relative errors undefined")
    return mae, rmse, 100.0 * mae / prior_mae, 100.0 * rmse / prior_rmse


def _check_scored(probs, actuals):
    s = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(actuals).reshape(-1)
    if s.shape != y.shape:
        raise DataError(f"{s.size} scores but {y.size} labels")
    n_pos = int(np.count_nonzero(y == 1))
    if n_pos == 0 or n_pos == y.size:
        raise DataError("ROC/PRC areas need both classes among the actual labels")
    return s, y == 1


def roc_auc(probs: Sequence[float], actuals: Sequence[int]) -> float:
    """Mann-Whitney form: P(score of a positive > score of a negative), ties 1/2."""
    s, pos = _check_scored(probs, actuals)
    ranks = rankdata(s)  # average ranks handle ties
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def prc_auc(probs: Sequence[float], actuals: Sequence[int]) -> float:
    """Area under precision-recall, step-interpolated over distinct thresholds.

    Sums ``(R_k - R_{k-1}) * P_k`` with thresholds swept from the highest
    score down; tied scores enter together.
    """
    s, pos = _check_scored(probs, actuals)
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tp = np.cumsum(pos)[last]
    predicted = last + 1
    precision = tp / predicted
    recall = tp / pos.sum()
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


@dataclass(frozen=True)
class EvaluationSummary:
    correct: int
    incorrect: int
    accuracy: float
    kappa: float
    mae: float
    rmse: float
    relative_absolute_error: float
    root_relative_squared_error: float
    total: int
    classes: ClassReport
    confusion: ConfusionMatrix

    def to_dict(self) -> dict:
        return _nan_to_none(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> EvaluationSummary:
        d = _none_to_nan(d)
        classes = ClassReport(**{k: ClassMetrics(**v) for k, v in d["classes"].items()})
        return cls(**{**d, "classes": classes, "confusion": ConfusionMatrix(**d["confusion"])})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _none_to_nan(obj):
    if isinstance(obj, dict):
        return {k: _none_to_nan(v) for k, v in obj.items()}
    return math.nan if obj is None else obj


def evaluate(actuals: Sequence[int], probs: Sequence[float],
             train_prior_positive: float, threshold: float = 0.5) -> EvaluationSummary:
    """Full summary from positive-class probabilities.

    A probability at or above ``threshold`` counts as a positive prediction.
    """
    y = np.asarray(actuals, dtype=np.int64).reshape(-1)
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    cm = build_confusion(y, (p >= threshold).astype(np.int64))
    accuracy, kappa = scalar_metrics(cm)
    try:
        mae, rmse, rae, rrse = probabilistic_errors(p, y, train_prior_positive)
    except DataError:
        mae, rmse, _, _ = probabilistic_errors(p, y, 0.5)
        rae = rrse = math.nan
    return EvaluationSummary(
        correct=cm.correct,
        incorrect=cm.incorrect,
        accuracy=accuracy,
        kappa=kappa,
        mae=mae,
        rmse=rmse,
        relative_absolute_error=rae,
        root_relative_squared_error=rrse,
        total=cm.total,
        classes=class_metrics(cm, p, y),
        confusion=cm,
    )


def _num(x: float, decimals: int = 4) -> str:
    """Fixed decimals with trailing zeros stripped; ``?`` for NaN."""
    if math.isnan(x):
        return "?"
    text = f"{x:.{decimals}f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def _pct(x: float) -> str:
    return "?" if math.isnan(x) else f"{x:.4f}"


def _cell(x: float) -> str:
    return "?" if math.isnan(x) else f"{x:.3f}"


def render_report(summary: EvaluationSummary, title: str | None = None) -> str:
    s = summary
    lines = []
    if title:
        lines += [title, ""]
    lines += [
        "=== Summary ===",
        "",
        f"{'Correctly Classified Instances':<35}{s.correct:>8}{_pct(100 * s.accuracy):>18} %",
        f"{'Incorrectly Classified Instances':<35}{s.incorrect:>8}"
        f"{_pct(100 * s.incorrect / s.total):>18} %",
        f"{'Kappa statistic':<35}{_num(s.kappa):>12}",
        f"{'Mean absolute error':<35}{_num(s.mae):>12}",
        f"{'Root mean squared error':<35}{_num(s.rmse):>12}",
        f"{'Relative absolute error':<35}{_pct(s.relative_absolute_error):>12} %",
        f"{'Root relative squared error':<35}{_pct(s.root_relative_squared_error):>12} %",
        f"{'Total Number of Instances':<35}{s.total:>8}",
        "",
        "=== Detailed Accuracy By Class ===",
        "",
        " " * 16 + "TP Rate  FP Rate  Precision  Recall   F-Measure  MCC      "
        "ROC Area  PRC Area  Class",
    ]
    rows = (("", s.classes.positive, "positive"),
            ("", s.classes.negative, "negative"),
            ("Weighted Avg.", s.classes.weighted, ""))
    for label, m, name in rows:
        cells = (m.tp_rate, m.fp_rate, m.precision, m.recall, m.f_measure,
                 m.mcc, m.roc_area, m.prc_area)
        widths = (9, 9, 11, 9, 11, 9, 10, 10)
        body = "".join(f"{_cell(v):<{w}}" for v, w in zip(cells, widths))
        lines.append(f"{label:<16}{body}{name}".rstrip())
    cm = s.confusion
    width = max(len(str(v)) for v in (cm.tp, cm.fn, cm.fp, cm.tn))
    lines += [
        "",
        "=== Confusion Matrix ===",
        "",
        f"{'a':>{width}} {'b':>{width}}   <-- classified as",
        f"{cm.tp:>{width}} {cm.fn:>{width}} |   a = positive",
        f"{cm.fp:>{width}} {cm.tn:>{width}} |   b = negative",
        "",
    ]
    return "\n".join(lines)
