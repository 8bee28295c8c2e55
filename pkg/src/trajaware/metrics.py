"""Scoring abnormality signals against labelled windows."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata


class SingleClassError(ValueError):
    """AUC is undefined when only one class is present."""


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs at least one positive and one negative label")
    # midranks turn the rank-sum into the pairwise count with half-credit ties
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _abnormal(windows):
    return [w for w in windows if w.label == "abnormal"]


def samples_to_binary(samples, windows):
    """Raw signal values and 0/1 labels (1 inside an abnormal window, ``[start, end)``)."""
    t = np.array([s.t for s in samples], dtype=float)
    scores = np.array([s.signal for s in samples], dtype=float)
    covered = np.zeros(t.size, dtype=bool)
    labels = np.zeros(t.size, dtype=np.int64)
    for w in windows:
        inside = (t >= w.start) & (t < w.end)
        covered |= inside
        if w.label == "abnormal":
            labels[inside] = 1
    if not covered.all():
        first = t[~covered][0]
        raise ValueError(f"sample at t={first!r} is not covered by any window")
    return scores, labels


class EventReport(NamedTuple):
    recall: float
    precision: float
    latencies: tuple
    false_events: int
    n_events: int

    @property
    def mean_latency(self) -> float:
        lat = [x for x in self.latencies if not math.isnan(x)]
        return float(np.mean(lat)) if lat else math.nan


def _runs(mask):
    """Inclusive ``(start, end)`` index pairs of True runs."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    d = np.diff(m.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1) - 1))


def event_detection(samples, windows, threshold, min_run=3) -> EventReport:
    """Event-level recall, precision and latency.

    An abnormal window is detected when ``min_run`` consecutive samples
    inside it exceed ``threshold``; its latency is the time of the first
    such sample minus the window start. Above-threshold runs of at least
    ``min_run`` samples count as detections; those touching no abnormal
    window are false events. Precision is the share of detection runs that
    touch an abnormal window (nan when there are none).
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    t = np.array([s.t for s in samples], dtype=float)
    above = np.array([s.signal for s in samples], dtype=float) > threshold
    events = _abnormal(windows)
    latencies = []
    for w in events:
        inside = (t >= w.start) & (t < w.end)
        lat = math.nan
        for a, b in _runs(above & inside):
            if b - a + 1 >= min_run:
                lat = float(t[a] - w.start)
                break
        latencies.append(lat)
    in_any = np.zeros(t.size, dtype=bool)
    for w in events:
        in_any |= (t >= w.start) & (t < w.end)
    runs = [(a, b) for a, b in _runs(above) if b - a + 1 >= min_run]
    true_runs = sum(1 for a, b in runs if in_any[a:b + 1].any())
    false_events = len(runs) - true_runs
    detected = sum(1 for x in latencies if not math.isnan(x))
    recall = detected / len(events) if events else math.nan
    precision = true_runs / len(runs) if runs else math.nan
    return EventReport(recall, precision, tuple(latencies), false_events, len(events))


def default_threshold(bank) -> float:
    """Largest certainty boundary among the learned models."""
    learned = bank.learned
    if not learned:
        raise ValueError("bank has no learned model")
    return max(m.psi for m in learned)
