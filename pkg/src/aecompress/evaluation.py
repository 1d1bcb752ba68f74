"""Reconstruction-error scoring and point-wise precision/recall/F1.

Scores are per-timestep mean squared reconstruction errors across
channels, with overlapping-window contributions averaged.  Thresholding
predicts an anomaly where score > tau; best_f1 sweeps every distinct
score value (plus +/-inf sentinels) and keeps the max-F1 threshold,
breaking ties toward the smallest tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .data import window


@dataclass
class EvalResult:
    threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    def as_dict(self):
        return {
            "threshold": self.threshold,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def anomaly_scores(model, series, window_cfg, act_quant=None, batch_size=256):
    """Per-timestep anomaly score series for a model on a labeled split.

    Each window contributes its per-timestep MSE over channels to the
    timesteps it covers; overlaps are count-normalized.  Timesteps past
    the last full window (possible when stride > 1) score 0.
    """
    wins, starts = window(series, window_cfg)
    w = window_cfg.length
    errs = np.empty((wins.shape[0], w), dtype=np.float64)
    for lo in range(0, wins.shape[0], batch_size):
        chunk = wins[lo : lo + batch_size]
        x_hat = model.forward(chunk, act_quant=act_quant)
        diff = x_hat.astype(np.float64) - chunk
        errs[lo : lo + batch_size] = (diff * diff).mean(axis=1)
    scores = np.zeros(series.length, dtype=np.float64)
    counts = np.zeros(series.length, dtype=np.int64)
    idx = starts[:, None] + np.arange(w)[None, :]
    np.add.at(scores, idx, errs)
    np.add.at(counts, idx, 1)
    return scores / np.maximum(counts, 1)


def _point_adjust(preds, labels):
    """Credit a hit anywhere in a true segment to the whole segment."""
    adjusted = preds.copy()
    boundaries = np.flatnonzero(np.diff(np.concatenate(([0], labels, [0]))))
    for start, end in zip(boundaries[::2], boundaries[1::2]):
        if preds[start:end].any():
            adjusted[start:end] = True
    return adjusted


def f1_at(scores, labels, tau, point_adjust=False):
    """Precision/recall/F1 of the prediction `score > tau` (0/0 -> 0)."""
    scores = np.asarray(scores)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ConfigurationError("scores and labels must have equal length")
    preds = scores > tau
    if point_adjust:
        preds = _point_adjust(preds, labels.astype(np.int8))
    tp = int(np.count_nonzero(preds & labels))
    fp = int(np.count_nonzero(preds & ~labels))
    fn = int(np.count_nonzero(~preds & labels))
    tn = int(np.count_nonzero(~preds & ~labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0
    return EvalResult(float(tau), precision, recall, f1, tp, fp, fn, tn)


def best_f1(scores, labels, point_adjust=False):
    """Max-F1 threshold sweep over all distinct score values."""
    scores = np.asarray(scores)
    candidates = np.concatenate(([-np.inf], np.unique(scores), [np.inf]))
    best = None
    for tau in candidates:
        result = f1_at(scores, labels, tau, point_adjust=point_adjust)
        if best is None or result.f1 > best.f1:
            best = result
    return best
