"""Detection quality against labeled synthetic bursts.

A detection is correct when one of its topics matches a labeled burst and the
detection tick falls inside [onset, onset + duration + match_window]. There is
no ground truth for organic streams, so precision here always refers to the
synthetic labels; on real streams it comes from human review instead.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence, TextIO

from .burst import DetectionConfig, TrendCandidate
from .postprocess import ConsolidatedTrend, PrecisionRule, apply_precision_control

DEFAULT_MATCH_WINDOW = 6
DEFAULT_SWEEP_THRESHOLDS = (1.0, 1.4, 1.8, 2.2, 3.0)


@dataclass(slots=True)
class BurstLabel:
    topic: str
    onset_hour: int
    duration_hours: int


@dataclass(slots=True)
class Detection:
    """Matching view of a detected trend: its topics and detection tick."""

    topics: tuple[str, ...]
    detect_hour: int

    @classmethod
    def from_candidate(cls, candidate: TrendCandidate) -> "Detection":
        return cls(topics=(candidate.topic,), detect_hour=candidate.detect_hour)

    @classmethod
    def from_trend(cls, trend: ConsolidatedTrend) -> "Detection":
        topics = tuple(dict.fromkeys([trend.representative, *trend.members]))
        return cls(topics=topics, detect_hour=trend.detect_hour)


@dataclass(slots=True)
class EvalReport:
    precision: float | None
    recall_on_injected: float | None
    mean_detection_latency_hours: float | None
    detected: int
    correct: int
    labels: int
    matched: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall_on_injected": self.recall_on_injected,
            "mean_detection_latency_hours": self.mean_detection_latency_hours,
            "counts": {
                "detected": self.detected,
                "correct": self.correct,
                "labels": self.labels,
                "matched": self.matched,
            },
        }


def _label_matches(label: BurstLabel, detection: Detection, match_window: int) -> bool:
    upper = label.onset_hour + label.duration_hours + match_window
    return (
        label.onset_hour <= detection.detect_hour <= upper
        and label.topic in detection.topics
    )


def evaluate(
    detections: Sequence[Detection],
    labels: Sequence[BurstLabel],
    match_window: int = DEFAULT_MATCH_WINDOW,
) -> EvalReport:
    """Score detections against labels.

    precision is None (undefined, not zero) when nothing was detected; latency
    uses the earliest matching tick per label, averaged over matched labels.
    """
    correct = 0
    first_hit: dict[int, int] = {}
    for detection in detections:
        hit = False
        for li, label in enumerate(labels):
            if _label_matches(label, detection, match_window):
                hit = True
                prev = first_hit.get(li)
                if prev is None or detection.detect_hour < prev:
                    first_hit[li] = detection.detect_hour
        if hit:
            correct += 1

    detected = len(detections)
    matched = len(first_hit)
    precision = (correct / detected) if detected else None
    recall = (matched / len(labels)) if labels else None
    latency = None
    if first_hit:
        latency = sum(
            first_hit[li] - labels[li].onset_hour for li in first_hit
        ) / len(first_hit)
    return EvalReport(
        precision=precision,
        recall_on_injected=recall,
        mean_detection_latency_hours=latency,
        detected=detected,
        correct=correct,
        labels=len(labels),
        matched=matched,
    )


@dataclass(slots=True)
class SweepRow:
    threshold: float
    precision: float | None
    coverage: float
    retained: int
    correct: int
    report: EvalReport | None = field(repr=False, default=None)


def sweep_thresholds(
    candidates: Sequence[TrendCandidate],
    labels: Sequence[BurstLabel],
    thresholds: Sequence[float] = DEFAULT_SWEEP_THRESHOLDS,
    config: DetectionConfig | None = None,
    per_category: Mapping[str, PrecisionRule] | None = None,
    match_window: int = DEFAULT_MATCH_WINDOW,
) -> list[SweepRow]:
    """Precision/coverage trade-off across score thresholds.

    Coverage is the share of raw candidates that survive precision control at
    each threshold, so it is monotone non-increasing by construction.
    """
    config = config or DetectionConfig()
    rows: list[SweepRow] = []
    for threshold in thresholds:
        cfg = replace(config, score_threshold=threshold)
        retained = apply_precision_control(candidates, cfg, per_category)
        report = evaluate(
            [Detection.from_candidate(c) for c in retained], labels, match_window
        )
        coverage = (len(retained) / len(candidates)) if candidates else 0.0
        rows.append(
            SweepRow(
                threshold=threshold,
                precision=report.precision,
                coverage=coverage,
                retained=len(retained),
                correct=report.correct,
                report=report,
            )
        )
    return rows


SWEEP_CSV_COLUMNS = ("threshold", "precision", "coverage", "retained", "correct")


def write_sweep_csv(rows: Iterable[SweepRow], fp: TextIO) -> None:
    """Delimited sweep output; undefined precision is an empty cell."""
    writer = csv.writer(fp)
    writer.writerow(SWEEP_CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row.threshold,
                "" if row.precision is None else row.precision,
                row.coverage,
                row.retained,
                row.correct,
            ]
        )


def read_labels(fp: TextIO) -> list[BurstLabel]:
    labels: list[BurstLabel] = []
    for line in fp:
        if not line.strip():
            continue
        obj = json.loads(line)
        labels.append(
            BurstLabel(
                topic=obj["topic"],
                onset_hour=int(obj["onset_hour"]),
                duration_hours=int(obj["duration_hours"]),
            )
        )
    return labels
