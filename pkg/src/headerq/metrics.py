"""Precision-recall analysis and precision-targeted threshold calibration.

A threshold ``t`` flags every example with ``score >= t``. Curves have one
point per distinct score, so equal scores always flip together.
"""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    achieved_precision: float
    achieved_recall: float
    target_precision: float
    feasible: bool


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be equal-length, nonempty 1-D sequences")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if not labels.any():
        raise ValueError("no positive labels")
    return scores, labels.astype(np.int64)


def pr_curve(scores: Sequence[float], labels: Sequence[int]) -> list[PrPoint]:
    """PR points ordered by descending threshold."""
    scores, labels = _validate(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of each run of equal scores
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    n_pos = int(tp[-1])
    return [
        PrPoint(float(s[i]), float(tp[i] / (tp[i] + fp[i])), float(tp[i] / n_pos))
        for i in last
    ]


def calibrate_threshold(
    scores: Sequence[float], labels: Sequence[int], target_precision: float
) -> CalibrationResult:
    """Lowest threshold whose precision reaches ``target_precision``.

    When no threshold qualifies, the most precise one is returned (the lowest
    among ties) with ``feasible=False``.
    """
    if not 0.0 < target_precision <= 1.0:
        raise ValueError("target_precision must be in (0, 1]")
    points = pr_curve(scores, labels)
    ok = [p for p in points if p.precision >= target_precision]
    feasible = bool(ok)
    if feasible:
        best = ok[-1]
    else:
        top = max(p.precision for p in points)
        best = [p for p in points if p.precision == top][-1]
    return CalibrationResult(
        best.threshold, best.precision, best.recall, target_precision, feasible
    )


def pr_auc(points: Sequence[PrPoint]) -> float:
    """Trapezoidal area under precision-vs-recall.

    The curve is anchored at recall 0 with the precision of the lowest-recall
    point, so a single point ``(p, r)`` has area ``p * r``.
    """
    if not points:
        raise ValueError("need at least one point")
    pts = sorted(points, key=lambda p: (p.recall, -p.threshold))
    r = np.array([0.0] + [p.recall for p in pts])
    pr = np.array([pts[0].precision] + [p.precision for p in pts])
    return float(np.clip(np.sum((r[1:] - r[:-1]) * (pr[1:] + pr[:-1]) / 2.0), 0.0, 1.0))


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def precision(self) -> float:
        flagged = self.tp + self.fp
        return self.tp / flagged if flagged else 1.0

    @property
    def recall(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else 0.0

    @property
    def false_positive_rate(self) -> float:
        neg = self.fp + self.tn
        return self.fp / neg if neg else 0.0


def confusion_at(scores, labels, threshold: float) -> Confusion:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    flagged = scores >= threshold
    return Confusion(
        tp=int((flagged & labels).sum()),
        fp=int((flagged & ~labels).sum()),
        tn=int((~flagged & ~labels).sum()),
        fn=int((~flagged & labels).sum()),
    )


@dataclass
class EvalReport:
    name: str
    n: int
    n_positive: int
    points: list[PrPoint]
    auc: float
    calibration: CalibrationResult
    threshold: float
    confusion: Confusion

    def summary(self) -> str:
        cal, cm = self.calibration, self.confusion
        lines = [
            f"split: {self.name}",
            f"messages: {self.n}",
            f"spam: {self.n_positive}",
            f"pr_auc: {self.auc:.6f}",
            f"target_precision: {cal.target_precision}",
            f"calibrated_threshold: {cal.threshold!r}",
            f"calibrated_precision: {cal.achieved_precision:.6f}",
            f"calibrated_recall: {cal.achieved_recall:.6f}",
            f"calibration_feasible: {str(cal.feasible).lower()}",
            f"operating_threshold: {self.threshold!r}",
            f"confusion: tp={cm.tp} fp={cm.fp} tn={cm.tn} fn={cm.fn}",
            f"operating_precision: {cm.precision:.6f}",
            f"operating_recall: {cm.recall:.6f}",
        ]
        return "\n".join(lines) + "\n"

    def points_csv(self) -> str:
        buf = io.StringIO()
        buf.write("threshold,precision,recall\n")
        for p in self.points:
            buf.write(f"{p.threshold!r},{p.precision!r},{p.recall!r}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("points")
        return d


def evaluate_scores(
    scores, labels, target_precision: float, threshold: float | None = None,
    name: str = "test",
) -> EvalReport:
    """Build a report; the confusion matrix uses ``threshold`` or, if None, the calibrated one."""
    points = pr_curve(scores, labels)
    cal = calibrate_threshold(scores, labels, target_precision)
    thr = cal.threshold if threshold is None else threshold
    return EvalReport(
        name=name,
        n=len(scores),
        n_positive=int(np.sum(labels)),
        points=points,
        auc=pr_auc(points),
        calibration=cal,
        threshold=thr,
        confusion=confusion_at(scores, labels, thr),
    )


def evaluate(model, records, target_precision: float, threshold: float | None = None,
             name: str = "test") -> EvalReport:
    """Score ``records`` with ``model`` and report against their labels."""
    from .features import encode_records
    from .model import predict_batch

    batch = encode_records(records, model.vocabs)
    scores = predict_batch(model, batch)
    return evaluate_scores(scores, batch.labels, target_precision, threshold, name)
