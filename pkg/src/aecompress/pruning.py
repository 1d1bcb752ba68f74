"""Magnitude pruning with a population-based mask search.

A candidate mask keeps, per layer, the largest-magnitude weights at a
sampled retained fraction (the *density*; sparsity = 1 - density).  A
population of masked copies of the pretrained model is retrained briefly,
each candidate is scored by best-threshold F1 on a labeled split, and the
argmax candidate alone receives the long final retraining.

Terminology note: APIs and reports speak of density (fraction retained)
and sparsity (fraction pruned) and never overload one word for both.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autoencoder import TrainConfig, train
from .errors import ConfigurationError, TrainingError
from .evaluation import anomaly_scores, best_f1
from .nn import Optimizer


@dataclass
class MaskSet:
    """Per-layer binary masks plus the sampled density targets."""

    masks: list[np.ndarray]  # float32 0/1, weight-shaped, prunable layers only
    levels: list[float]      # sampled density per layer

    def achieved_densities(self):
        return [np.count_nonzero(m) / m.size for m in self.masks]

    def achieved_density(self):
        total = sum(m.size for m in self.masks)
        return sum(np.count_nonzero(m) for m in self.masks) / total


@dataclass
class PruneConfig:
    population_size: int = 16
    v_min: float | list[float] = 0.2
    v_max: float | list[float] = 0.8
    short_epochs: int = 3
    final_epochs: int = 30
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ConfigurationError("population_size must be positive")
        if self.short_epochs < 0 or self.final_epochs < 0:
            raise ConfigurationError("epoch counts must be non-negative")

    def bounds(self, n_layers):
        """Per-layer (v_min, v_max) arrays, validating lengths and ranges."""
        lo = np.asarray(self.v_min, dtype=np.float64)
        hi = np.asarray(self.v_max, dtype=np.float64)
        if lo.ndim == 0:
            lo = np.full(n_layers, float(lo))
        if hi.ndim == 0:
            hi = np.full(n_layers, float(hi))
        if lo.shape != (n_layers,) or hi.shape != (n_layers,):
            raise ConfigurationError(
                f"density bounds must be scalars or length-{n_layers} vectors"
            )
        if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
            raise ConfigurationError("density bounds must satisfy 0 <= min <= max <= 1")
        return lo, hi


@dataclass
class PrunedModel:
    model: object
    mask_set: MaskSet


@dataclass
class CandidateRecord:
    index: int
    levels: list[float]
    achieved_densities: list[float]
    achieved_density: float
    f1: float
    loss_curve: list[float]
    failed: bool = False


@dataclass
class SearchReport:
    candidates: list[CandidateRecord]
    selected_index: int
    final_loss_curve: list[float]

    def as_dict(self):
        return {
            "candidates": [
                {
                    "index": c.index,
                    "levels": c.levels,
                    "achieved_densities": c.achieved_densities,
                    "achieved_density": c.achieved_density,
                    "f1": c.f1,
                    "loss_curve": c.loss_curve,
                    "failed": c.failed,
                }
                for c in self.candidates
            ],
            "selected_index": self.selected_index,
            "final_loss_curve": self.final_loss_curve,
        }


def derive_seed(*parts):
    """Stable 32-bit seed from integer parts (candidate/stage tags)."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def candidate_sample_seed(seed, index):
    return derive_seed(seed, 0, index)


def candidate_train_seed(seed, index):
    return derive_seed(seed, 1, index)


def final_train_seed(seed):
    return derive_seed(seed, 2)


def sample_sparsity_vector(cfg, rng, n_layers):
    """Draw one density per layer from a clamped normal.

    The normal is centered on the interval midpoint with a spread of one
    sixth of the interval width, then clamped to [min, max], so nearly
    all mass falls inside the bounds rather than piling up on them.
    """
    lo, hi = cfg.bounds(n_layers)
    mean = lo + (hi - lo) / 2
    std = (hi - lo) / 6
    draws = rng.normal(mean, std)
    return np.clip(draws, lo, hi)


def _magnitude_order(weights):
    # descending magnitude, ties broken by lower flat index
    flat = np.abs(np.asarray(weights, dtype=np.float64)).ravel()
    return np.argsort(-flat, kind="stable")


def retained_count(size, level):
    return int(np.rint(level * size))


def compute_threshold(weights, level):
    """Magnitude cutoff so the strictly-above fraction matches the density.

    With k weights to retain, the cutoff sits halfway between the k-th and
    (k+1)-th largest magnitudes; degenerate densities fall outside the
    magnitude range entirely.
    """
    flat = np.abs(np.asarray(weights, dtype=np.float64)).ravel()
    if flat.size == 0:
        raise ConfigurationError("cannot threshold an empty weight tensor")
    if not 0 <= level <= 1:
        raise ConfigurationError(f"density level {level} outside [0, 1]")
    k = retained_count(flat.size, level)
    mags = np.sort(flat)[::-1]
    if k <= 0:
        return float(mags[0])
    if k >= flat.size:
        return float(mags[-1] - 1.0)
    return float((mags[k - 1] + mags[k]) / 2)


def generate_mask(weights, threshold):
    """Binary mask retaining weights with magnitude strictly above the cutoff."""
    return (np.abs(weights) > threshold).astype(np.float32)


def density_mask(weights, level):
    """Mask retaining exactly round(level * size) weights.

    Equivalent to thresholding except at magnitude ties, where lower flat
    indices win until the count is met; this makes the retained set a
    prefix of one fixed ordering, so masks are monotone in the level.
    """
    k = retained_count(weights.size, level)
    order = _magnitude_order(weights)
    mask = np.zeros(weights.size, dtype=np.float32)
    mask[order[:k]] = 1.0
    return mask.reshape(weights.shape)


def build_mask_set(model, levels):
    """Masks over the model's current weights at the given density levels."""
    layers = model.param_layers
    levels = list(np.asarray(levels, dtype=np.float64))
    if len(levels) != len(layers):
        raise ConfigurationError(
            f"{len(levels)} density levels for {len(layers)} prunable layers"
        )
    masks = [density_mask(layer.weight, lv) for layer, lv in zip(layers, levels)]
    return MaskSet(masks, [float(lv) for lv in levels])


def apply_mask(model, mask_set):
    """Zero pruned weights in place (idempotent); biases are untouched."""
    layers = model.param_layers
    if len(mask_set.masks) != len(layers):
        raise ConfigurationError("mask set does not match model layer count")
    for layer, mask in zip(layers, mask_set.masks):
        if mask.shape != layer.weight.shape:
            raise ConfigurationError(
                f"mask shape {mask.shape} does not match weights {layer.weight.shape}"
            )
        layer.weight *= mask
    return model


def weighted_sparsity(model, mask_set):
    """Size-weighted global retained fraction over all prunable layers."""
    layers = model.param_layers
    total = sum(l.weight.size for l in layers)
    kept = sum(float(m.sum()) for m in mask_set.masks)
    return kept / total


def _evaluate_candidate(model, eval_series, window_cfg, point_adjust):
    scores = anomaly_scores(model, eval_series, window_cfg)
    return best_f1(scores, eval_series.labels, point_adjust=point_adjust)


def _run_candidate(args):
    (pretrained, cfg, train_windows, eval_series, window_cfg,
     index, point_adjust) = args
    layers = pretrained.param_layers
    rng = np.random.default_rng(candidate_sample_seed(cfg.seed, index))
    levels = sample_sparsity_vector(cfg, rng, len(layers))
    model = pretrained.clone()
    mask_set = build_mask_set(model, levels)
    apply_mask(model, mask_set)
    tcfg = replace(cfg.train, epochs=cfg.short_epochs,
                   seed=candidate_train_seed(cfg.seed, index))
    optimizer = Optimizer(model.parameters(), tcfg.optimizer)
    failed = False
    losses = []
    try:
        losses = train(model, train_windows, tcfg, mask_set=mask_set,
                       optimizer=optimizer)
        f1 = _evaluate_candidate(model, eval_series, window_cfg, point_adjust).f1
    except TrainingError:
        f1 = 0.0
        failed = True
    record = CandidateRecord(
        index=index,
        levels=[float(v) for v in levels],
        achieved_densities=mask_set.achieved_densities(),
        achieved_density=mask_set.achieved_density(),
        f1=float(f1),
        loss_curve=[float(v) for v in losses],
        failed=failed,
    )
    return model, mask_set, optimizer, record


def lottery_search(pretrained, cfg, train_windows, eval_series, window_cfg,
                   point_adjust=False, jobs=1):
    """Population search over pruning masks, then final long retraining.

    Every candidate derives its own RNG streams from (cfg.seed, index),
    so results are identical whatever the worker scheduling.  Candidates
    whose training diverges score F1 = 0 and the search continues.

    Returns (PrunedModel, SearchReport).
    """
    if cfg.population_size < 1:
        raise ConfigurationError("population must contain at least one candidate")
    arglist = [
        (pretrained, cfg, train_windows, eval_series, window_cfg, i, point_adjust)
        for i in range(cfg.population_size)
    ]
    if jobs > 1 and cfg.population_size > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_candidate, arglist))
    else:
        results = [_run_candidate(a) for a in arglist]

    records = [r[3] for r in results]
    selected = int(np.argmax([r.f1 for r in records]))
    model, mask_set, optimizer, _ = results[selected]

    final_cfg = replace(cfg.train, epochs=cfg.final_epochs,
                        seed=final_train_seed(cfg.seed))
    final_losses = train(model, train_windows, final_cfg, mask_set=mask_set,
                         optimizer=optimizer)
    apply_mask(model, mask_set)
    report = SearchReport(records, selected, [float(v) for v in final_losses])
    return PrunedModel(model, mask_set), report
