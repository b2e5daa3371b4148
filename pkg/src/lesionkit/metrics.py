"""Confusion matrices, classification metrics and binomial confidence intervals.

For the binary case with ``positive_class`` P:

* accuracy    = (Tp + Tn) / (Tp + Tn + Fp + Fn)
* precision   = Tp / (Tp + Fp)
* recall      = Tp / (Tp + Fn)
* F1          = 2 * precision * recall / (precision + recall)
* sensitivity = Tp / (Tp + Fn)
* specificity = Tn / (Tn + Fp)

Recall uses the usual ``Tp / (Tp + Fn)``, which makes it equal to
sensitivity. Undefined ratios (0/0) are reported as 0. With ``weighted``
averaging, precision/recall/F1 are support-weighted means over classes;
sensitivity and specificity always refer to the positive class (one-vs-rest
for more than two classes).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from statistics import NormalDist
from typing import Sequence

import numpy as np

__all__ = ["ConfidenceInterval", "ConfusionMatrix", "MetricsError", "MetricsReport",
           "average_reports", "confusion", "metrics_report", "wald_interval",
           "wilson_interval", "z_quantile"]

Z_95 = 1.959963984540054


class MetricsError(ValueError):
    pass


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple[str, ...]
    positive_class: str | None = None

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if c.shape != (k, k):
            raise MetricsError(f"counts shape {c.shape} does not match {k} classes")
        if (c < 0).any():
            raise MetricsError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        pos = self.positive_class if self.positive_class is not None else self.class_names[0]
        if pos not in self.class_names:
            raise MetricsError(f"positive class {pos!r} is not among {self.class_names}")
        object.__setattr__(self, "positive_class", pos)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def positive_index(self) -> int:
        return self.class_names.index(self.positive_class)

    def one_vs_rest(self, index: int | None = None) -> dict[str, int]:
        """Tp/Fn/Fp/Tn counts for one class against the rest (default: positive class)."""
        i = self.positive_index if index is None else index
        c = self.counts
        tp = int(c[i, i])
        fn = int(c[i].sum() - tp)
        fp = int(c[:, i].sum() - tp)
        tn = self.total - tp - fn - fp
        return {"tp": tp, "fn": fn, "fp": fp, "tn": tn}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.class_names])
        for name, row in zip(self.class_names, self.counts):
            w.writerow([name, *(int(v) for v in row)])
        return buf.getvalue()


def confusion(predictions: Sequence[int], labels: Sequence[int], class_names: Sequence[str],
              positive_class: str | None = None) -> ConfusionMatrix:
    """``counts[i, j]`` = number of samples with true class i predicted as j."""
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    true = np.asarray(labels, dtype=np.int64).ravel()
    k = len(class_names)
    if pred.shape != true.shape:
        raise MetricsError(f"{len(pred)} predictions for {len(true)} labels")
    if pred.size == 0:
        raise MetricsError("no samples")
    if k < 2:
        raise MetricsError("need at least two classes")
    for arr in (pred, true):
        if arr.min() < 0 or arr.max() >= k:
            raise MetricsError(f"class indices must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts, tuple(class_names), positive_class)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    sensitivity: float
    specificity: float
    averaging: str
    support: tuple[float, ...]

    def as_row(self) -> list[float]:
        return [self.accuracy, self.precision, self.recall, self.f1,
                self.sensitivity, self.specificity]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["support"] = list(self.support)
        return d


def metrics_report(cm: ConfusionMatrix, averaging: str = "weighted") -> MetricsReport:
    if averaging not in ("weighted", "positive"):
        raise MetricsError(f"averaging must be 'weighted' or 'positive', got {averaging!r}")
    total = cm.total
    if total == 0:
        raise MetricsError("confusion matrix is empty")
    c = cm.counts
    k = len(cm.class_names)
    support = c.sum(axis=1)
    precision = np.array([_ratio(c[i, i], c[:, i].sum()) for i in range(k)])
    recall = np.array([_ratio(c[i, i], support[i]) for i in range(k)])
    f1 = np.array([_ratio(2 * p * r, p + r) for p, r in zip(precision, recall)])
    pos = cm.positive_index
    if averaging == "weighted":
        weights = support / total
        prec, rec, f = (float(np.dot(weights, v)) for v in (precision, recall, f1))
    else:
        prec, rec, f = float(precision[pos]), float(recall[pos]), float(f1[pos])
    ovr = cm.one_vs_rest(pos)
    return MetricsReport(
        accuracy=float(np.trace(c)) / total,
        precision=prec,
        recall=rec,
        f1=f,
        sensitivity=_ratio(ovr["tp"], ovr["tp"] + ovr["fn"]),
        specificity=_ratio(ovr["tn"], ovr["tn"] + ovr["fp"]),
        averaging=averaging,
        support=tuple(float(s) for s in support),
    )


def average_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Elementwise mean of several reports (e.g. repeated runs)."""
    if not reports:
        raise MetricsError("no reports to average")
    modes = {r.averaging for r in reports}
    if len(modes) != 1 or len({len(r.support) for r in reports}) != 1:
        raise MetricsError("reports differ in averaging mode or class count")
    values = {}
    for f in fields(MetricsReport):
        if f.name == "averaging":
            continue
        if f.name == "support":
            values["support"] = tuple(float(v) for v in np.mean([r.support for r in reports], axis=0))
        else:
            values[f.name] = float(np.mean([getattr(r, f.name) for r in reports]))
    return MetricsReport(averaging=modes.pop(), **values)


def z_quantile(alpha: float) -> float:
    """Two-sided standard-normal critical value ``Phi^-1(1 - alpha/2)``."""
    if not 0.0 < alpha < 1.0:
        raise MetricsError(f"alpha must lie in (0, 1), got {alpha}")
    if alpha == 0.05:
        return Z_95
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    method: str
    alpha: float
    k: int
    n: int

    @property
    def estimate(self) -> float:
        return self.k / self.n

    def to_dict(self) -> dict:
        return asdict(self)


def _check_counts(k: int, n: int) -> None:
    if int(k) != k or int(n) != n or n < 1 or not 0 <= k <= n:
        raise MetricsError(f"need integers 0 <= k <= n with n >= 1, got k={k}, n={n}")


def wilson_interval(k: int, n: int, alpha: float = 0.05) -> ConfidenceInterval:
    """Wilson score interval for a binomial proportion."""
    _check_counts(k, n)
    z = z_quantile(alpha)
    p = k / n
    z2n = z * z / n
    center = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n)
    lo, hi = center - half, center + half
    # exact endpoints at the boundaries; avoids round-off like 1 - 1e-17
    if k == 0:
        lo = 0.0
    if k == n:
        hi = 1.0
    return ConfidenceInterval(max(0.0, lo), min(1.0, hi), "wilson", alpha, int(k), int(n))


def wald_interval(k: int, n: int, alpha: float = 0.05) -> ConfidenceInterval:
    """Normal-approximation (Wald) interval, clamped to [0, 1]."""
    _check_counts(k, n)
    z = z_quantile(alpha)
    p = k / n
    half = z * math.sqrt(p * (1.0 - p) / n)
    return ConfidenceInterval(max(0.0, p - half), min(1.0, p + half), "wald", alpha, int(k), int(n))


def reports_to_csv(rows: dict[str, MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "accuracy", "precision", "recall", "f1", "sensitivity", "specificity",
                "averaging"])
    for name, r in rows.items():
        w.writerow([name, *(repr(v) for v in r.as_row()), r.averaging])
    return buf.getvalue()


def intervals_to_csv(rows: dict[str, ConfidenceInterval]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "method", "k", "n", "estimate", "lower", "upper", "alpha"])
    for name, ci in rows.items():
        w.writerow([name, ci.method, ci.k, ci.n, repr(ci.estimate), repr(ci.lower),
                    repr(ci.upper), repr(ci.alpha)])
    return buf.getvalue()


def to_json(obj) -> str:
    """Stable JSON for reports/intervals (sorted keys, trailing newline)."""
    def default(o):
        if hasattr(o, "to_dict"):
            return o.to_dict()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(f"cannot serialize {type(o).__name__}")
    return json.dumps(obj, default=default, indent=2, sort_keys=True) + "\n"
