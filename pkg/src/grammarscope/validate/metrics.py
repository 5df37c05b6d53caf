"""Threshold calibration, verdicts, detection metrics and report files."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ThresholdModel:
    tau: float
    higher_is_corrupt: bool
    balanced_accuracy: float
    correct_scores: list[float] = field(default_factory=list)
    corrupt_scores: list[float] = field(default_factory=list)
    rule: str = "max balanced accuracy over midpoints and outer cuts, smallest tau on ties"

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "ThresholdModel":
        return cls(**json.loads(text))


def _flag(scores: np.ndarray, tau: float, higher_is_corrupt: bool) -> np.ndarray:
    # the boundary itself counts as correct
    return scores > tau if higher_is_corrupt else scores < tau


def balanced_accuracy(correct: np.ndarray, corrupt: np.ndarray, tau: float, higher_is_corrupt: bool) -> float:
    tnr = 1.0 - np.mean(_flag(correct, tau, higher_is_corrupt))
    tpr = np.mean(_flag(corrupt, tau, higher_is_corrupt))
    return float((tnr + tpr) / 2)


def calibrate_threshold(correct, corrupt, higher_is_corrupt: bool = True) -> ThresholdModel:
    """Pick the cut maximizing balanced accuracy on validation scores.

    Candidates are the midpoints between adjacent distinct scores plus one
    cut below and one above every score (the two constant classifiers).
    """
    correct = np.asarray(correct, dtype=np.float64)
    corrupt = np.asarray(corrupt, dtype=np.float64)
    if correct.size == 0 or corrupt.size == 0:
        raise ValueError("both score lists must be non-empty")
    if not (np.all(np.isfinite(correct)) and np.all(np.isfinite(corrupt))):
        raise ValueError("scores must be finite")
    values = np.unique(np.concatenate([correct, corrupt]))
    candidates = np.concatenate([[values[0] - 1.0], (values[:-1] + values[1:]) / 2, [values[-1] + 1.0]])
    best_tau, best = None, -1.0
    for tau in candidates:  # ascending, so strict > keeps the smallest tau on ties
        ba = balanced_accuracy(correct, corrupt, tau, higher_is_corrupt)
        if ba > best:
            best_tau, best = float(tau), ba
    return ThresholdModel(best_tau, higher_is_corrupt, best, correct.tolist(), corrupt.tolist())


def classify(score: float, model: ThresholdModel) -> bool:
    """True when the score is judged corrupted."""
    return bool(_flag(np.asarray(score, dtype=np.float64), model.tau, model.higher_is_corrupt))


@dataclass
class DetectionReport:
    tp: int
    tn: int
    fp: int
    fn: int
    method: str = ""
    masks: str = ""  # where the scored masks came from
    corruption: str = ""
    num_patch: int | None = None
    ps: int | None = None
    puzzle_rate: float | None = None

    @property
    def accuracy(self) -> float:
        total = self.tp + self.tn + self.fp + self.fn
        return (self.tp + self.tn) / total if total else 0.0

    @property
    def recall(self) -> float:
        # no corrupted samples: nothing to detect, reported as 0.0
        positives = self.tp + self.fn
        return self.tp / positives if positives else 0.0

    def row(self) -> dict:
        return {
            "method": self.method,
            "masks": self.masks,
            "corruption": self.corruption,
            "num_patch": "" if self.num_patch is None else self.num_patch,
            "ps": "" if self.ps is None else self.ps,
            "accuracy": f"{self.accuracy:.6f}",
            "recall": f"{self.recall:.6f}",
            "puzzle_rate": "" if self.puzzle_rate is None else f"{self.puzzle_rate:.6f}",
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
        }


def detection_metrics(verdicts, labels, **scenario) -> DetectionReport:
    """Confusion counts with "corrupted" as the positive class."""
    v = np.asarray(verdicts, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    if v.shape != y.shape:
        raise ValueError(f"{v.size} verdicts but {y.size} labels")
    return DetectionReport(
        tp=int(np.sum(v & y)), tn=int(np.sum(~v & ~y)),
        fp=int(np.sum(v & ~y)), fn=int(np.sum(~v & y)), **scenario,
    )


REPORT_FIELDS = ["method", "masks", "corruption", "num_patch", "ps", "accuracy", "recall", "puzzle_rate", "tp", "tn", "fp", "fn"]


def write_report_csv(path, reports: list[DetectionReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


def write_report_json(path, reports: list[DetectionReport], details: dict | None = None) -> None:
    payload = {"reports": [r.row() for r in reports]}
    if details:
        payload["details"] = details
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def write_histogram_csv(path, scores, labels) -> None:
    lines = ["score,label"] + [f"{float(s):.10g},{int(bool(l))}" for s, l in zip(scores, labels)]
    Path(path).write_text("\n".join(lines) + "\n")
