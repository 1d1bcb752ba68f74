"""Synthetic labeled benchmark data, CSV ingestion, normalization, windowing.

The synthetic generator is the desk-scale stand-in for licensed plant and
spacecraft telemetry: a mixed bank of per-channel sinusoids with additive
noise, with spike / level-shift / noise-burst anomalies injected into the
test split (and, under a disjoint seed, into the validation split so model
selection has a labeled signal).  All randomness flows through numpy's
PCG64 generator, so a seed pins the data bit-for-bit across platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError

ANOMALY_KINDS = ("spike", "level_shift", "noise_burst")


@dataclass
class LabeledSeries:
    values: np.ndarray  # [T, C] float32
    labels: np.ndarray  # [T] uint8
    channel_names: list[str]
    split: str = "train"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.values.ndim != 2:
            raise DataError(f"series values must be [T, C], got {self.values.shape}")
        if self.labels.shape != (self.values.shape[0],):
            raise DataError("labels length must match series length")
        if not np.all(np.isfinite(self.values)):
            raise DataError("series contains non-finite values")
        if self.split == "train" and self.labels.any():
            raise DataError("train split must be label-free (all-normal)")

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[1]


@dataclass
class WindowConfig:
    length: int = 12
    stride: int = 1
    normalization: str = "minmax"

    def __post_init__(self):
        if self.length < 1 or self.stride < 1:
            raise ConfigurationError("window length and stride must be positive")
        if self.normalization not in ("minmax", "none"):
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")


@dataclass
class AnomalySpec:
    kind: str
    count: int
    min_length: int
    max_length: int
    magnitude: float
    channels_hit: int = 3

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ConfigurationError(f"unknown anomaly kind {self.kind!r}")
        if self.count < 0 or self.min_length < 1 or self.max_length < self.min_length:
            raise ConfigurationError("invalid anomaly segment lengths")
        if self.channels_hit < 1:
            raise ConfigurationError("channels_hit must be positive")


@dataclass
class SynthConfig:
    channels: int = 8
    length: int = 6000
    seed: int = 7
    train_fraction: float = 0.5
    val_fraction: float = 0.25
    noise_sigma: float = 0.04
    min_period: float = 8.0
    max_period: float = 60.0
    anomalies: list[AnomalySpec] = field(default_factory=lambda: [
        AnomalySpec("spike", 4, 1, 3, 3.0),
        AnomalySpec("level_shift", 4, 10, 30, 1.2),
        AnomalySpec("noise_burst", 4, 10, 30, 8.0),
    ])

    def __post_init__(self):
        if self.channels < 1 or self.length < 10:
            raise ConfigurationError("need at least one channel and 10 timesteps")
        if not 0 < self.train_fraction < 1 or not 0 < self.val_fraction < 1:
            raise ConfigurationError("split fractions must lie in (0, 1)")
        if self.train_fraction + self.val_fraction >= 1:
            raise ConfigurationError("train + val fractions must leave room for test")


def _base_signal(cfg, rng, length):
    t = np.arange(length, dtype=np.float64)
    periods = rng.uniform(cfg.min_period, cfg.max_period, size=cfg.channels)
    phases = rng.uniform(0, 2 * np.pi, size=cfg.channels)
    amps = rng.uniform(0.6, 1.2, size=cfg.channels)
    raw = amps[None, :] * np.sin(2 * np.pi * t[:, None] / periods[None, :] + phases[None, :])
    mixing = np.eye(cfg.channels) + 0.25 * rng.standard_normal((cfg.channels, cfg.channels))
    mixed = raw @ mixing.T
    mixed += cfg.noise_sigma * rng.standard_normal(mixed.shape)
    return mixed.astype(np.float32)


def _inject_anomalies(values, cfg, rng):
    """Perturb segments in place; returns the per-timestep label vector."""
    length = values.shape[0]
    labels = np.zeros(length, dtype=np.uint8)
    channel_scale = values.std(axis=0)
    for spec in cfg.anomalies:
        for _ in range(spec.count):
            seg_len = int(rng.integers(spec.min_length, spec.max_length + 1))
            if seg_len >= length:
                raise ConfigurationError(
                    f"anomaly segment length {seg_len} exceeds split length {length}"
                )
            start = int(rng.integers(0, length - seg_len))
            n_hit = min(spec.channels_hit, values.shape[1])
            chans = rng.choice(values.shape[1], size=n_hit, replace=False)
            seg = slice(start, start + seg_len)
            for chan in chans:
                scale = float(channel_scale[chan])
                if spec.kind == "spike":
                    sign = 1.0 if rng.random() < 0.5 else -1.0
                    values[seg, chan] += sign * spec.magnitude * scale
                elif spec.kind == "level_shift":
                    sign = 1.0 if rng.random() < 0.5 else -1.0
                    values[seg, chan] += sign * spec.magnitude * scale
                else:  # noise_burst
                    values[seg, chan] += (
                        spec.magnitude * cfg.noise_sigma * rng.standard_normal(seg_len)
                    ).astype(np.float32)
            labels[seg] = 1
    return labels


def generate_synthetic(cfg):
    """Build (train, val, test) LabeledSeries from a SynthConfig.

    Train is anomaly-free; val receives an independently seeded injection
    so candidate selection never sees the test anomalies.
    """
    rng = np.random.default_rng(cfg.seed)
    values = _base_signal(cfg, rng, cfg.length)
    n_train = int(cfg.length * cfg.train_fraction)
    n_val = int(cfg.length * cfg.val_fraction)
    names = [f"ch{i}" for i in range(cfg.channels)]

    train_vals = values[:n_train].copy()
    val_vals = values[n_train : n_train + n_val].copy()
    test_vals = values[n_train + n_val :].copy()

    val_labels = _inject_anomalies(val_vals, cfg, np.random.default_rng((cfg.seed, 1)))
    test_labels = _inject_anomalies(test_vals, cfg, np.random.default_rng((cfg.seed, 2)))

    train = LabeledSeries(train_vals, np.zeros(n_train, dtype=np.uint8), names, "train")
    val = LabeledSeries(val_vals, val_labels, names, "val")
    test = LabeledSeries(test_vals, test_labels, names, "test")
    return train, val, test


def load_csv(path, label_column="label", split="test"):
    """Read a rectangular numeric CSV with a header row.

    The optional label column holds 0/1 anomaly flags; without it, labels
    default to all-zero.  Errors cite 1-based (row, column) positions.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        label_idx = header.index(label_column) if label_column in header else None
        names = [h for i, h in enumerate(header) if i != label_idx]
        rows, labels = [], []
        for r, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: ragged row at line {r}")
            vals = []
            for c, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at row {r}, column {c + 1}"
                    ) from None
                if c == label_idx:
                    labels.append(int(v))
                else:
                    vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float32)
    label_arr = (np.asarray(labels, dtype=np.uint8) if label_idx is not None
                 else np.zeros(len(rows), dtype=np.uint8))
    return LabeledSeries(values, label_arr, names, split)


def save_csv(series, path):
    """Inverse of load_csv, for dumping synthetic data to disk."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(series.channel_names + ["label"])
        for row, label in zip(series.values, series.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


@dataclass
class NormStats:
    minima: np.ndarray
    maxima: np.ndarray


def fit_normalization(train):
    return NormStats(train.values.min(axis=0), train.values.max(axis=0))


def normalize(series, stats):
    """Per-channel min-max map to [0,1] using train-split stats only.

    Constant channels collapse to 0.0; out-of-range test values map
    outside [0,1] without clipping (the map stays affine).
    """
    span = stats.maxima - stats.minima
    safe = np.where(span > 0, span, 1).astype(np.float32)
    scaled = (series.values - stats.minima) / safe
    scaled[:, span <= 0] = 0.0
    return LabeledSeries(scaled, series.labels, series.channel_names, series.split)


def window(series, cfg):
    """Slide windows over the time axis.

    Returns (windows [N, C, W], starts [N]) where starts maps each window
    back to its first timestep for score redistribution.
    """
    t, _ = series.values.shape
    if cfg.length > t:
        raise ConfigurationError(
            f"window length {cfg.length} exceeds series length {t}"
        )
    num = (t - cfg.length) // cfg.stride + 1
    starts = np.arange(num) * cfg.stride
    idx = starts[:, None] + np.arange(cfg.length)[None, :]
    wins = series.values[idx]  # [N, W, C]
    return np.ascontiguousarray(wins.transpose(0, 2, 1)), starts
