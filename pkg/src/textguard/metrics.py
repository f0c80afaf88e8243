"""Ranking and threshold metrics: PR-AUC and precision/recall/F1.

PR-AUC is step-interpolated average precision with tied scores grouped into
a single threshold step, so the metric is well defined for constant scorers
(it then equals prevalence exactly) and invariant under strictly increasing
score transforms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScoredExample:
    record_id: str
    score: float
    gold: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite score for {self.record_id!r}")
        if self.gold not in (0, 1):
            raise ValueError(f"gold must be 0/1, got {self.gold!r}")


def _scores_and_gold(examples) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(examples, "shape") or (examples and not hasattr(examples[0], "score")):
        raise TypeError("pass a list of ScoredExample")
    scores = np.asarray([e.score for e in examples], dtype=np.float64)
    gold = np.asarray([e.gold for e in examples], dtype=np.int64)
    return scores, gold


def pr_auc(examples: list[ScoredExample]) -> float:
    """Average precision: AP = sum over threshold groups of (R_k - R_{k-1}) P_k.

    Examples are ranked by descending score; all examples sharing a score
    form one threshold group, evaluated together.
    """
    if not examples:
        raise ValueError("no examples")
    scores, gold = _scores_and_gold(examples)
    n_pos = int(gold.sum())
    if n_pos == 0:
        raise ValueError("no_positives")

    order = np.argsort(-scores, kind="stable")
    scores, gold = scores[order], gold[order]

    ap = 0.0
    tp = 0
    seen = 0
    prev_recall = 0.0
    start = 0
    n = len(examples)
    while start < n:
        stop = start
        while stop < n and scores[stop] == scores[start]:
            stop += 1
        tp += int(gold[start:stop].sum())
        seen += stop - start
        recall = tp / n_pos
        precision = tp / seen
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        start = stop
    return ap


def prf1(examples: list[ScoredExample], threshold: float) -> dict:
    """Confusion-matrix metrics with predictions = score >= threshold.

    When nothing is predicted positive, precision is reported as 0 with a
    degenerate flag so callers can tell it apart from a genuine 0.
    """
    if not examples:
        raise ValueError("no examples")
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    scores, gold = _scores_and_gold(examples)
    predicted = scores >= threshold
    tp = int(np.sum(predicted & (gold == 1)))
    fp = int(np.sum(predicted & (gold == 0)))
    fn = int(np.sum(~predicted & (gold == 1)))
    degenerate = tp + fp == 0
    precision = 0.0 if degenerate else tp / (tp + fp)
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "degenerate": degenerate,
    }
