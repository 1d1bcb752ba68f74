"""Linear fixed-point and nonlinear codebook quantization.

Linear quantization maps a value x to sigma * round(x / sigma) on a signed
grid whose step sigma = 2^-frac_bits is derived per tensor from the
largest magnitude; out-of-range values saturate to the representable
extremes instead of wrapping.

Nonlinear quantization clusters a layer's weights with seeded 1-D
k-means, quantizes the centroids to a fixed-point grid, and stores a
per-weight index into that codebook.  Exact-zero weights (the pruned
positions) never enter the clustering: they are pinned to a dedicated
zero entry so masks survive quantization bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import Autoencoder
from .errors import ConfigurationError
from .nn import DTYPE


@dataclass
class FixedPointParams:
    total_bits: int
    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.total_bits < 2:
            raise ConfigurationError("fixed-point width must be at least 2 bits")
        if self.frac_bits != self.total_bits - self.int_bits - 1:
            raise ConfigurationError("frac_bits must equal total_bits - int_bits - 1")

    @property
    def scale(self):
        """Grid step sigma = 2^-frac_bits."""
        return 2.0 ** -self.frac_bits

    def code_range(self):
        half = 1 << (self.total_bits - 1)
        return -half, half - 1

    def as_dict(self):
        return {"total_bits": self.total_bits, "int_bits": self.int_bits,
                "frac_bits": self.frac_bits}


def params_from_max(max_abs, total_bits):
    """Fixed-point split for a tensor whose largest magnitude is max_abs.

    An all-zero tensor has no meaningful magnitude; it gets int_bits = 0
    and every value quantizes to code 0.
    """
    if total_bits < 2:
        raise ConfigurationError("fixed-point width must be at least 2 bits")
    max_abs = float(max_abs)
    int_bits = 0 if max_abs == 0 else math.ceil(math.log2(max_abs))
    return FixedPointParams(total_bits, int_bits, total_bits - int_bits - 1)


def compute_linear_params(values, total_bits):
    values = np.asarray(values)
    if values.size == 0:
        raise ConfigurationError("cannot derive quantizer from an empty tensor")
    return params_from_max(np.max(np.abs(values)), total_bits)


def quantize_linear(values, params):
    """(quantized float32 values, integer codes) on the fixed-point grid."""
    x = np.asarray(values, dtype=np.float64)
    codes = np.round(x / params.scale)
    lo, hi = params.code_range()
    codes = np.clip(codes, lo, hi).astype(np.int64)
    return (codes * params.scale).astype(DTYPE), codes


def dequantize_linear(codes, params):
    return (np.asarray(codes, dtype=np.float64) * params.scale).astype(DTYPE)


_KMEANS_DP_LIMIT = 512


def _kmeans_dp(x_sorted, k):
    """Exact 1-D k-means: optimal clusters are contiguous in sorted order,
    so dynamic programming over split points finds the global SSE minimum.
    """
    n = x_sorted.size
    s1 = np.concatenate(([0.0], np.cumsum(x_sorted)))
    s2 = np.concatenate(([0.0], np.cumsum(x_sorted**2)))
    starts = np.arange(n)[:, None]
    ends = np.arange(n)[None, :]
    counts = ends - starts + 1
    sums = s1[ends + 1] - s1[starts]
    sq = s2[ends + 1] - s2[starts]
    with np.errstate(invalid="ignore", divide="ignore"):
        cost = sq - sums**2 / counts  # cost[s, j]: SSE of x[s..j]
    cost[counts < 1] = np.inf
    np.maximum(cost, 0.0, out=cost)

    best = cost[0].copy()  # one cluster over x[0..j]
    splits = np.zeros((k, n), dtype=np.int64)
    for m in range(1, k):
        # cluster m covers x[s..j]; previous clusters cover x[0..s-1]
        table = np.full((n, n), np.inf)
        table[1:, :] = best[:-1, None] + cost[1:, :]
        splits[m] = np.argmin(table, axis=0)
        best = table[splits[m], np.arange(n)]

    assign_sorted = np.empty(n, dtype=np.int64)
    j = n - 1
    for m in range(k - 1, -1, -1):
        s = splits[m][j] if m > 0 else 0
        assign_sorted[s : j + 1] = m
        j = s - 1
    centers = np.array([x_sorted[assign_sorted == m].mean() for m in range(k)])
    return centers, assign_sorted


def kmeans_1d(values, k, seed=0, max_iter=100, tol=1e-6):
    """1-D k-means returning (centroids ascending, assignments).

    When k reaches the number of distinct values the result is the exact
    identity clustering.  Up to _KMEANS_DP_LIMIT points the global SSE
    optimum is computed by dynamic programming; beyond that a seeded
    k-means++ Lloyd iteration with restarts takes over (empty clusters
    reseeded to the point farthest from its centroid).
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if k < 1:
        raise ConfigurationError("cluster count must be at least 1")
    uniq = np.unique(x)
    if k >= uniq.size:
        return uniq, np.searchsorted(uniq, x)

    if x.size <= _KMEANS_DP_LIMIT:
        order = np.argsort(x, kind="stable")
        centers, assign_sorted = _kmeans_dp(x[order], k)
        assign = np.empty(x.size, dtype=np.int64)
        assign[order] = assign_sorted
        return centers, assign

    best = None
    for restart in range(8):
        centers = _lloyd_once(x, k, np.random.default_rng((seed, restart)),
                              max_iter, tol)
        assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        sse = float(((x - centers[assign]) ** 2).sum())
        if best is None or sse < best[0]:
            best = (sse, centers, assign)
    _, centers, assign = best
    order = np.argsort(centers, kind="stable")
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    return centers[order], remap[assign]


def _lloyd_once(x, k, rng, max_iter, tol):
    centers = np.empty(k)
    centers[0] = x[rng.integers(x.size)]
    d2 = (x - centers[0]) ** 2
    for j in range(1, k):
        total = d2.sum()
        if total == 0:
            centers[j] = x[rng.integers(x.size)]
        else:
            centers[j] = x[rng.choice(x.size, p=d2 / total)]
        d2 = np.minimum(d2, (x - centers[j]) ** 2)

    for _ in range(max_iter):
        assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = x[assign == j]
            if members.size:
                new_centers[j] = members.mean()
            else:
                dist = np.abs(x - new_centers[assign])
                new_centers[j] = x[int(np.argmax(dist))]
        shift = np.max(np.abs(new_centers - centers))
        centers = new_centers
        if shift <= tol:
            break
    return centers


def clustering_sse(values, centroids, assignments):
    x = np.asarray(values, dtype=np.float64).ravel()
    return float(((x - centroids[assignments]) ** 2).sum())


@dataclass
class Codebook:
    """Quantized centroid table plus per-weight indices into it."""

    centroids: np.ndarray      # float32, each representable at psi bits
    indices: np.ndarray        # int64, flat, in [0, len(centroids))
    shape: tuple
    omega: int                 # requested cluster count
    psi: int                   # centroid bit width
    centroid_params: FixedPointParams

    @property
    def index_bits(self):
        return math.ceil(math.log2(len(self.centroids))) if len(self.centroids) > 1 else 0

    def dequantize(self):
        return self.centroids[self.indices].reshape(self.shape).astype(DTYPE)


def quantize_layer_nonlinear(weights, omega, psi, seed=0):
    """Codebook-quantize one weight tensor (1-D k-means + fixed point).

    Exact zeros bypass the clustering and keep a dedicated 0.0 codebook
    entry; the remaining values are clustered with the leftover budget.
    The codebook never exceeds omega entries.
    """
    if omega < 1:
        raise ConfigurationError("cluster count omega must be at least 1")
    w = np.asarray(weights)
    flat = w.ravel().astype(np.float64)
    zeros = flat == 0.0
    indices = np.zeros(flat.size, dtype=np.int64)

    if zeros.all() or (omega == 1 and zeros.any()):
        # nothing (representable) to cluster: single exact-zero entry
        centroid_vals = np.zeros(1)
    elif not zeros.any():
        centers, assign = kmeans_1d(flat, omega, seed=seed)
        centroid_vals, indices = centers, assign
    else:
        budget = min(omega - 1, np.unique(flat[~zeros]).size)
        centers, assign = kmeans_1d(flat[~zeros], budget, seed=seed)
        # zero entry first, then shift clustered ids; re-sorted below
        centroid_vals = np.concatenate(([0.0], centers))
        indices[~zeros] = assign + 1

    params = compute_linear_params(centroid_vals, psi)
    quantized, _ = quantize_linear(centroid_vals, params)
    if zeros.any():
        quantized[0] = 0.0  # pinned regardless of the grid

    order = np.argsort(quantized, kind="stable")
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    return Codebook(
        centroids=quantized[order].astype(DTYPE),
        indices=remap[indices],
        shape=w.shape,
        omega=int(omega),
        psi=int(psi),
        centroid_params=params,
    )


@dataclass
class LayerQuant:
    """Quantized payload for one parameterized layer."""

    scheme: str  # "linear" | "nonlinear"
    weight_shape: tuple
    weight_codes: np.ndarray | None = None        # linear scheme
    weight_params: FixedPointParams | None = None
    codebook: Codebook | None = None              # nonlinear scheme
    bias_codes: np.ndarray | None = None          # biases are always linear
    bias_params: FixedPointParams | None = None

    def dequantize_weight(self):
        if self.scheme == "linear":
            return dequantize_linear(self.weight_codes, self.weight_params).reshape(
                self.weight_shape)
        return self.codebook.dequantize()

    def dequantize_bias(self):
        return dequantize_linear(self.bias_codes, self.bias_params)


@dataclass
class QuantizedModel:
    """Self-contained quantized model: evaluation uses only this payload."""

    encoder_specs: list
    input_shape: tuple
    seed: int
    scheme: str
    layers: list[LayerQuant]
    act_params: list[FixedPointParams] | None = None
    total_bits: int | None = None
    omega: int | None = None
    psi: int | None = None
    provenance: dict = field(default_factory=dict)

    def to_model(self):
        """Reconstruct a float model from the quantized payload."""
        model = Autoencoder(self.encoder_specs, self.input_shape, self.seed)
        for layer, payload in zip(model.param_layers, self.layers):
            layer.weight = payload.dequantize_weight()
            layer.bias = payload.dequantize_bias()
        return model

    def act_quantizers(self):
        if self.act_params is None:
            return None
        return [ActivationQuantizer(p) for p in self.act_params]


class ActivationQuantizer:
    """Callable that snaps activations onto a calibrated fixed-point grid."""

    def __init__(self, params):
        self.params = params

    def __call__(self, values):
        q, _ = quantize_linear(values, self.params)
        return q


def calibrate_activations(model, calibration_windows, total_bits=8, batch_size=256):
    """Per-layer activation quantizers from observed max magnitudes.

    Layers that stay identically zero over the calibration data get the
    degenerate quantizer (int_bits = 0) which passes zeros through.
    """
    windows = np.asarray(calibration_windows, dtype=DTYPE)
    if windows.size == 0:
        raise ConfigurationError("calibration set is empty")
    maxima = np.zeros(len(model.param_layers))
    for lo in range(0, windows.shape[0], batch_size):
        h = windows[lo : lo + batch_size]
        qi = 0
        for layer in model.layers:
            h = layer.forward(h)
            if layer.has_params:
                maxima[qi] = max(maxima[qi], float(np.max(np.abs(h))))
                qi += 1
    return [params_from_max(m, total_bits) for m in maxima]


def _quantize_bias(bias, total_bits):
    params = compute_linear_params(bias, total_bits) if bias.size else \
        params_from_max(0.0, total_bits)
    _, codes = quantize_linear(bias, params)
    return codes, params


def quantize_model_linear(model, total_bits, calibration_windows=None, act_bits=8):
    """Fixed-point quantize every parameter tensor, each with its own grid."""
    layers = []
    for layer in model.param_layers:
        params = compute_linear_params(layer.weight, total_bits)
        _, codes = quantize_linear(layer.weight, params)
        bias_codes, bias_params = _quantize_bias(layer.bias, total_bits)
        layers.append(LayerQuant(
            scheme="linear", weight_shape=layer.weight.shape,
            weight_codes=codes, weight_params=params,
            bias_codes=bias_codes, bias_params=bias_params,
        ))
    act = (calibrate_activations(model, calibration_windows, act_bits)
           if calibration_windows is not None else None)
    return QuantizedModel(
        encoder_specs=model.encoder_specs, input_shape=model.input_shape,
        seed=model.seed, scheme="linear", layers=layers, act_params=act,
        total_bits=int(total_bits),
    )


def quantize_model_nonlinear(model, omega, psi, calibration_windows=None,
                             act_bits=8, seed=0):
    """Codebook-quantize weights; biases use the linear scheme at psi bits."""
    layers = []
    for i, layer in enumerate(model.param_layers):
        codebook = quantize_layer_nonlinear(layer.weight, omega, psi,
                                            seed=(seed, i))
        bias_codes, bias_params = _quantize_bias(layer.bias, psi)
        layers.append(LayerQuant(
            scheme="nonlinear", weight_shape=layer.weight.shape,
            codebook=codebook, bias_codes=bias_codes, bias_params=bias_params,
        ))
    act = (calibrate_activations(model, calibration_windows, act_bits)
           if calibration_windows is not None else None)
    return QuantizedModel(
        encoder_specs=model.encoder_specs, input_shape=model.input_shape,
        seed=model.seed, scheme="nonlinear", layers=layers, act_params=act,
        omega=int(omega), psi=int(psi),
    )


def dequantize(qmodel):
    """Float model whose weights are exactly the quantized values."""
    return qmodel.to_model()
